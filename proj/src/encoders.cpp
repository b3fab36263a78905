#include "p2d/encoders.hpp"

#include "p2d/error.hpp"
#include "p2d/process.hpp"
#include "p2d/rng.hpp"

#include <cmath>
#include <sstream>

namespace p2d {

Eigen::VectorXd HashingTextEncoder::encode(const std::string& text) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
  std::istringstream words(text);
  std::string word;
  while (words >> word) {
    Rng rng(seed_from("token:" + word));
    for (int i = 0; i < dim_; ++i) out[i] += rng.normal();
  }
  if (out.isZero()) out[0] = 1.0;
  return out;
}

ProjectionImageEncoder::ProjectionImageEncoder(int dim) : dim_(dim) {
  const Eigen::Index in = features(ImageD::zeros(3, 4, 4)).size();
  projection_.resize(dim_, in);
  Rng rng(seed_from("projection-image-v1"));
  for (Eigen::Index c = 0; c < in; ++c)
    for (Eigen::Index r = 0; r < dim_; ++r) projection_(r, c) = rng.normal();
}

Eigen::VectorXd ProjectionImageEncoder::features(const ImageD& image) {
  const ImageD rgb = to_rgb(image);
  constexpr int kGrid = 4;
  const ImageD coarse = resize_bilinear(rgb, kGrid, kGrid);
  Eigen::VectorXd f(3 * kGrid * kGrid + 6 + 1);
  Eigen::Index k = 0;
  for (const auto& p : coarse.planes)
    for (Eigen::Index i = 0; i < p.size(); ++i) f[k++] = p.data()[i] - 0.5;
  for (const auto& p : rgb.planes) {
    const double mean = p.mean();
    f[k++] = mean - 0.5;
    f[k++] = std::sqrt((p - mean).square().mean());
  }
  const PlaneD gray = to_gray(rgb);
  double energy = 0.0;
  if (gray.rows() > 1 && gray.cols() > 1) {
    const auto dx = gray.rightCols(gray.cols() - 1) - gray.leftCols(gray.cols() - 1);
    const auto dy = gray.bottomRows(gray.rows() - 1) - gray.topRows(gray.rows() - 1);
    energy = dx.abs().mean() + dy.abs().mean();
  }
  f[k++] = energy;
  return f;
}

Eigen::VectorXd ProjectionImageEncoder::encode(const ImageD& image, const std::filesystem::path&) {
  Eigen::VectorXd out = projection_ * features(image);
  if (out.isZero()) out[0] = 1.0;
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> values;
  double v = 0;
  while (in >> v) values.push_back(v);
  if (!in.eof() || values.empty())
    throw Error(ErrorCode::EncoderUnavailable, "encoder output is not a list of numbers");
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

namespace {

Eigen::VectorXd run_encoder(const std::vector<std::string>& argv) {
  const ProcessResult r = run_process(argv);
  if (r.exit_status != 0)
    throw Error(ErrorCode::EncoderUnavailable,
                argv[0] + " exited with status " + std::to_string(r.exit_status) + "; output: " + r.stdout_text);
  return parse_vector(r.stdout_text);
}

}  // namespace

Eigen::VectorXd CommandTextEncoder::encode(const std::string& text) {
  return run_encoder({program_, "text", text});
}

Eigen::VectorXd CommandImageEncoder::encode(const ImageD&, const std::filesystem::path& source) {
  return run_encoder({program_, "image", source.string()});
}

}  // namespace p2d
