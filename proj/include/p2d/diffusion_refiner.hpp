#pragma once

#include "p2d/corpus.hpp"
#include "p2d/image.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace p2d {

/// How a backend may be shared across pipeline workers.
enum class BackendConcurrency { ThreadSafe, PerWorker };

struct RefineParams {
  int steps = 50;
  double strength = 0.6;  // fraction of the noise schedule injected into the reference
  std::uint64_t seed = 0;
};

/// Inputs handed to a backend. Paths are set when the images live on disk.
struct RefineInputs {
  ImageD content;    // painting, structure source
  ImageD reference;  // pseudo-real image, appearance source
  std::filesystem::path content_path;
  std::filesystem::path reference_path;
};

class RefineBackend {
 public:
  virtual ~RefineBackend() = default;
  virtual std::string id() const = 0;
  virtual BackendConcurrency concurrency() const = 0;
  /// Returns an image the size of the inputs. Throws BackendUnavailable.
  virtual ImageD refine(const RefineInputs& inputs, const RefineParams& params) = 0;
};

/// Desk-scale stand-in for a pretrained diffusion translator. Noises the reference to
/// `strength` along a linear-beta schedule, then runs deterministic DDIM steps whose
/// clean-image estimate comes from a 3×3 linear denoiser fitted on noised copies of the
/// reference, nudged each step toward the content's high-frequency edge map.
/// strength == 0 returns the reference unchanged.
class StubDiffusionBackend final : public RefineBackend {
 public:
  struct Options {
    int schedule_length = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double edge_guidance = 1.0;
    int edge_radius = 2;
    double ridge = 1e-6;
  };

  StubDiffusionBackend() = default;
  explicit StubDiffusionBackend(Options options) : options_(options) {}

  std::string id() const override { return "stub-diffusion-v1"; }
  BackendConcurrency concurrency() const override { return BackendConcurrency::ThreadSafe; }
  ImageD refine(const RefineInputs& inputs, const RefineParams& params) override;

 private:
  Options options_;
};

/// Runs `program <content> <reference> <out> <seed>`; exit status 0 means success.
class ExternalRefineBackend final : public RefineBackend {
 public:
  explicit ExternalRefineBackend(std::string program, std::filesystem::path scratch_dir = {})
      : program_(std::move(program)), scratch_(std::move(scratch_dir)) {}

  std::string id() const override { return "external:" + program_; }
  BackendConcurrency concurrency() const override { return BackendConcurrency::PerWorker; }
  ImageD refine(const RefineInputs& inputs, const RefineParams& params) override;

 private:
  std::string program_;
  std::filesystem::path scratch_;
};

struct RefineRequest {
  ImageRecord content;    // painting
  ImageRecord reference;  // pseudo-real image
  RefineParams params;
};

struct RefineResult {
  ImageRecord real_scene;
  double structure_score = 0.0;  // real_scene vs content
  std::string backend_id;
};

/// In-memory refinement with size checks. Throws ShapeError / InvalidArgument.
ImageD refine_image(const RefineInputs& inputs, const RefineParams& params, RefineBackend& backend);

/// Refines the request's images and writes out_path. The real-scene record id is
/// "<content id>.real_scene".
RefineResult refine(const RefineRequest& request, RefineBackend& backend, const std::filesystem::path& out_path);

std::unique_ptr<RefineBackend> make_refine_backend(const std::string& name);

}  // namespace p2d
