#include "p2d/diffusion_refiner.hpp"

#include "p2d/error.hpp"
#include "p2d/process.hpp"
#include "p2d/rng.hpp"
#include "p2d/structure_score.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unistd.h>

namespace p2d {
namespace fs = std::filesystem;

namespace {

constexpr int kTaps = 9;

// Row i holds the 3×3 neighbourhood (edge-clamped) of pixel i followed by a bias of 1.
Eigen::MatrixXd neighbourhoods(const PlaneD& p) {
  const Eigen::Index h = p.rows(), w = p.cols();
  Eigen::MatrixXd x(h * w, kTaps + 1);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index xx = 0; xx < w; ++xx) {
      const Eigen::Index row = y * w + xx;
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          x(row, k++) = p(std::clamp<Eigen::Index>(y + dy, 0, h - 1), std::clamp<Eigen::Index>(xx + dx, 0, w - 1));
      x(row, kTaps) = 1.0;
    }
  return x;
}

PlaneD noised(const PlaneD& clean, double alpha_bar, Rng& rng) {
  PlaneD out(clean.rows(), clean.cols());
  const double a = std::sqrt(alpha_bar), s = std::sqrt(1.0 - alpha_bar);
  for (Eigen::Index i = 0; i < clean.size(); ++i) out.data()[i] = a * clean.data()[i] + s * rng.normal();
  return out;
}

PlaneD high_pass(const PlaneD& p, int radius) { return p - box_blur(p, radius); }

}  // namespace

ImageD StubDiffusionBackend::refine(const RefineInputs& inputs, const RefineParams& params) {
  if (params.strength == 0.0) return inputs.reference;

  const ImageD reference = to_rgb(inputs.reference);
  const PlaneD content_edges = high_pass(to_gray(inputs.content), options_.edge_radius);
  const int T = options_.schedule_length;
  std::vector<double> alpha_bar(static_cast<std::size_t>(T));
  double running = 1.0;
  for (int t = 0; t < T; ++t) {
    const double beta = options_.beta_start + (options_.beta_end - options_.beta_start) * t / std::max(1, T - 1);
    running *= 1.0 - beta;
    alpha_bar[static_cast<std::size_t>(t)] = running;
  }
  const int t_start = std::clamp(static_cast<int>(std::lround(params.strength * (T - 1))), 0, T - 1);
  std::vector<int> timesteps;
  for (int i = 0; i < params.steps; ++i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(t_start) * (params.steps - i) / params.steps));
    if (timesteps.empty() || t != timesteps.back()) timesteps.push_back(t);
  }

  Rng rng(params.seed);
  ImageD x;
  for (const auto& p : reference.planes) x.planes.push_back(noised(p, alpha_bar[static_cast<std::size_t>(t_start)], rng));

  std::vector<Eigen::MatrixXd> reference_targets;
  for (const auto& p : reference.planes) reference_targets.push_back(Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()));

  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    const int t = timesteps[i];
    const double ab = alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = i + 1 < timesteps.size() ? alpha_bar[static_cast<std::size_t>(timesteps[i + 1])] : 1.0;

    // Clean-image estimate from a denoiser fitted at this noise level.
    ImageD x0;
    for (std::size_t c = 0; c < reference.planes.size(); ++c) {
      const Eigen::MatrixXd train = neighbourhoods(noised(reference.planes[c], ab, rng));
      Eigen::MatrixXd gram = train.transpose() * train;
      gram.diagonal().array() += options_.ridge * static_cast<double>(train.rows());
      const Eigen::VectorXd weights = gram.ldlt().solve(train.transpose() * reference_targets[c]);
      const Eigen::VectorXd estimate = neighbourhoods(x.planes[c]) * weights;
      x0.planes.push_back(Eigen::Map<const PlaneD>(estimate.data(), x.planes[c].rows(), x.planes[c].cols()));
    }

    // Edge guidance, fading out with the noise level.
    const double guidance = options_.edge_guidance * std::sqrt(1.0 - ab);
    const PlaneD correction = guidance * (content_edges - high_pass(to_gray(x0), options_.edge_radius));
    for (auto& p : x0.planes) p += correction;

    if (ab_prev >= 1.0) {
      x = std::move(x0);
      break;
    }
    for (std::size_t c = 0; c < x.planes.size(); ++c) {
      const PlaneD eps = (x.planes[c] - std::sqrt(ab) * x0.planes[c]) / std::sqrt(1.0 - ab);
      x.planes[c] = std::sqrt(ab_prev) * x0.planes[c] + std::sqrt(1.0 - ab_prev) * eps;
    }
  }
  return clamp01(std::move(x));
}

ImageD ExternalRefineBackend::refine(const RefineInputs& inputs, const RefineParams& params) {
  static std::atomic<unsigned long> counter{0};
  const fs::path scratch = scratch_.empty() ? fs::temp_directory_path() / "p2d-refine" : scratch_;
  fs::create_directories(scratch);
  const std::string tag = std::to_string(::getpid()) + "-" + std::to_string(counter++);
  fs::path content = inputs.content_path, reference = inputs.reference_path;
  if (content.empty()) {
    content = scratch / ("content-" + tag + ".png");
    write_png(content, inputs.content);
  }
  if (reference.empty()) {
    reference = scratch / ("reference-" + tag + ".png");
    write_png(reference, inputs.reference);
  }
  const fs::path out = scratch / ("out-" + tag + ".png");
  const ProcessResult r =
      run_process({program_, content.string(), reference.string(), out.string(), std::to_string(params.seed)});
  if (r.exit_status != 0 || !fs::exists(out))
    throw Error(ErrorCode::BackendUnavailable,
                program_ + " exited with status " + std::to_string(r.exit_status) + "; output: " + r.stdout_text);
  ImageD img = read_png(out);
  fs::remove(out);
  return img;
}

ImageD refine_image(const RefineInputs& inputs, const RefineParams& params, RefineBackend& backend) {
  if (params.steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  if (!(params.strength >= 0.0 && params.strength <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "strength must lie in [0,1]");
  if (inputs.content.height() != inputs.reference.height() || inputs.content.width() != inputs.reference.width())
    throw Error(ErrorCode::ShapeError, "content and reference sizes differ");
  ImageD out = backend.refine(inputs, params);
  if (out.height() != inputs.content.height() || out.width() != inputs.content.width())
    throw Error(ErrorCode::ShapeError, backend.id() + " changed the image size");
  return out;
}

RefineResult refine(const RefineRequest& request, RefineBackend& backend, const fs::path& out_path) {
  RefineInputs inputs{read_png(request.content.path), read_png(request.reference.path), request.content.path,
                      request.reference.path};
  const ImageD out = refine_image(inputs, request.params, backend);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_png(out_path, out);
  RefineResult result;
  result.real_scene = make_record(out_path, DomainTag::RealScene, out_path.filename().string());
  result.real_scene.id = request.content.id + ".real_scene";
  // Score what was written, so the number matches the artifact on disk.
  result.structure_score = structure_score(read_png(out_path), inputs.content);
  result.backend_id = backend.id();
  return result;
}

std::unique_ptr<RefineBackend> make_refine_backend(const std::string& name) {
  if (name == "stub") return std::make_unique<StubDiffusionBackend>();
  if (name.rfind("external:", 0) == 0) return std::make_unique<ExternalRefineBackend>(name.substr(9));
  throw Error(ErrorCode::BackendUnavailable, "unknown refine backend '" + name + "'");
}

}  // namespace p2d
