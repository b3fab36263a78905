#pragma once

#include "p2d/diffusion_refiner.hpp"
#include "p2d/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace p2d {

/// Relative inverse depth: larger values are nearer to the camera.
struct DepthMap {
  PlaneD values;
  std::string source_image_id;
  bool normalized = false;
  int native_height = 0;  // resolution the backend produced before resampling
  int native_width = 0;
};

class DepthBackend {
 public:
  virtual ~DepthBackend() = default;
  virtual std::string id() const = 0;
  virtual BackendConcurrency concurrency() const = 0;
  virtual PlaneD estimate(const ImageD& image, const std::filesystem::path& source) = 0;
};

/// Test backend: depth is the image luminance.
class LuminanceDepthBackend final : public DepthBackend {
 public:
  std::string id() const override { return "luminance-v1"; }
  BackendConcurrency concurrency() const override { return BackendConcurrency::ThreadSafe; }
  PlaneD estimate(const ImageD& image, const std::filesystem::path&) override { return to_gray(image); }
};

/// Runs `program <image> <out.png> <seed>`; the output is a 16-bit gray PNG of inverse depth.
class ExternalDepthBackend final : public DepthBackend {
 public:
  explicit ExternalDepthBackend(std::string program, std::filesystem::path scratch_dir = {})
      : program_(std::move(program)), scratch_(std::move(scratch_dir)) {}
  std::string id() const override { return "external:" + program_; }
  BackendConcurrency concurrency() const override { return BackendConcurrency::PerWorker; }
  PlaneD estimate(const ImageD& image, const std::filesystem::path& source) override;

 private:
  std::string program_;
  std::filesystem::path scratch_;
};

std::unique_ptr<DepthBackend> make_depth_backend(const std::string& name);

/// Resamples the backend output to the input resolution; normalized = false.
/// Throws BackendUnavailable, or DecodeError for non-finite backend output.
DepthMap estimate_depth(const ImageD& image, std::string image_id, DepthBackend& backend,
                        const std::filesystem::path& source = {});

/// Affine rescale to [0,1]; a constant map becomes all 0.5. Idempotent.
DepthMap normalize_depth(DepthMap map);

/// pixel = floor(v * 65535 + 0.5). Throws NotNormalized.
void export_depth_png16(const DepthMap& map, const std::filesystem::path& path);
DepthMap import_depth_png16(const std::filesystem::path& path, std::string source_image_id = {});

/// Solid relief: a top surface over the pixel grid at z = base + v * relief_height, a
/// flat bottom grid at z = 0 and vertical walls joining the two along the border.
/// Vertices: 2·H·W (top grid, then bottom grid). Triangles: 4(H-1)(W-1) + 4(H-1) + 4(W-1),
/// oriented outward. Pixel (r, c) sits at x = c·pitch, y = (H-1-r)·pitch.
struct ReliefMesh {
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> vertices;
  Eigen::Matrix<std::uint32_t, Eigen::Dynamic, 3, Eigen::RowMajor> triangles;
  double base_thickness = 0.0;
  int grid_height = 0;
  int grid_width = 0;
};

/// Throws NotNormalized, TooSmall (H or W < 2), InvalidArgument (non-positive dimensions).
ReliefMesh depth_to_relief_mesh(const DepthMap& map, double pitch_mm, double relief_height_mm,
                                double base_thickness_mm);

/// Every undirected edge is used by exactly two triangles, once in each direction.
bool is_watertight(const ReliefMesh& mesh);
double signed_volume(const ReliefMesh& mesh);

/// Binary STL: 80-byte header, little-endian uint32 count, 50 bytes per triangle.
std::vector<std::uint8_t> stl_bytes(const ReliefMesh& mesh);
void write_stl(const ReliefMesh& mesh, const std::filesystem::path& path);
void write_obj(const ReliefMesh& mesh, const std::filesystem::path& path);

}  // namespace p2d
