#pragma once

#include "p2d/image.hpp"
#include "p2d/nn.hpp"
#include "p2d/rng.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace p2d::testing {

/// Random rectangle or disc on a flat background.
inline ImageD toy_shape(Rng& rng, int size) {
  ImageD img = ImageD::zeros(3, size, size);
  double bg[3], fg[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = rng.uniform(0.05, 0.45);
    fg[c] = rng.uniform(0.55, 0.95);
  }
  const bool disc = rng.uniform() < 0.5;
  const double cy = rng.uniform(0.3, 0.7) * size, cx = rng.uniform(0.3, 0.7) * size;
  const double ry = rng.uniform(0.15, 0.3) * size, rx = rng.uniform(0.15, 0.3) * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
      const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
      for (int c = 0; c < 3; ++c) img.planes[static_cast<std::size_t>(c)](y, x) = inside ? fg[c] : bg[c];
    }
  return img;
}

inline ImageD inverted(const ImageD& img) {
  ImageD out = img;
  for (auto& p : out.planes) p = 1.0 - p;
  return out;
}

struct ToyDomains {
  std::vector<nn::Tensor> shapes;
  std::vector<nn::Tensor> inverted_shapes;
};

/// Two unpaired sets: shapes, and colour inversions of an independent set of shapes.
inline ToyDomains toy_domains(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  ToyDomains d;
  for (int i = 0; i < count; ++i) d.shapes.push_back(nn::to_tensor(toy_shape(rng, size)));
  for (int i = 0; i < count; ++i) d.inverted_shapes.push_back(nn::to_tensor(inverted(toy_shape(rng, size))));
  return d;
}

/// Smooth random image with values in [0,1].
inline ImageD smooth_image(Rng& rng, int height, int width, int channels = 3) {
  ImageD img = ImageD::zeros(channels, height, width);
  for (auto& p : img.planes) {
    const double a = rng.uniform(0.5, 3.0), b = rng.uniform(0.5, 3.0), phase = rng.uniform(0, 6.28);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        p(y, x) = 0.5 + 0.4 * std::sin(a * y / height * 6.28 + phase) * std::cos(b * x / width * 6.28);
  }
  return img;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(seed_from(tag) ^ static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)));
    path_ = std::filesystem::temp_directory_path() / ("p2d-" + tag + "-" + std::to_string(rng.next() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace p2d::testing
