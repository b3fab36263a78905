#pragma once

#include "p2d/semantic_matcher.hpp"

#include <string>
#include <vector>

namespace p2d {

/// Deterministic text encoder: sums a seeded Gaussian vector per whitespace token.
class HashingTextEncoder final : public TextEncoder {
 public:
  explicit HashingTextEncoder(int dim = 64) : dim_(dim) {}
  std::string version() const override { return "hashing-text-v1/" + std::to_string(dim_); }
  Eigen::VectorXd encode(const std::string& text) override;

 private:
  int dim_;
};

/// Deterministic image encoder: coarse colour layout, colour statistics and edge
/// energy, projected by a fixed seeded matrix into `dim` dimensions.
class ProjectionImageEncoder final : public ImageEncoder {
 public:
  explicit ProjectionImageEncoder(int dim = 64);
  std::string version() const override { return "projection-image-v1/" + std::to_string(dim_); }
  Eigen::VectorXd encode(const ImageD& image, const std::filesystem::path& source) override;

  static Eigen::VectorXd features(const ImageD& image);

 private:
  int dim_;
  Eigen::MatrixXd projection_;
};

/// Adapter to an external joint text-image model. Invokes
///   `program text <prompt>` and `program image <path>`
/// and reads whitespace-separated floats from stdout. Non-zero exit → EncoderUnavailable.
class CommandTextEncoder final : public TextEncoder {
 public:
  CommandTextEncoder(std::string program, std::string model_version)
      : program_(std::move(program)), model_version_(std::move(model_version)) {}
  std::string version() const override { return "command:" + model_version_; }
  Eigen::VectorXd encode(const std::string& text) override;

 private:
  std::string program_;
  std::string model_version_;
};

class CommandImageEncoder final : public ImageEncoder {
 public:
  CommandImageEncoder(std::string program, std::string model_version)
      : program_(std::move(program)), model_version_(std::move(model_version)) {}
  std::string version() const override { return "command:" + model_version_; }
  Eigen::VectorXd encode(const ImageD& image, const std::filesystem::path& source) override;

 private:
  std::string program_;
  std::string model_version_;
};

Eigen::VectorXd parse_vector(const std::string& text);

}  // namespace p2d
