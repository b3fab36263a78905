#include "p2d/depth.hpp"

#include "p2d/error.hpp"
#include "p2d/process.hpp"

#include <atomic>
#include <cmath>
#include <unistd.h>

namespace p2d {
namespace fs = std::filesystem;

PlaneD ExternalDepthBackend::estimate(const ImageD& image, const fs::path& source) {
  static std::atomic<unsigned long> counter{0};
  const fs::path scratch = scratch_.empty() ? fs::temp_directory_path() / "p2d-depth" : scratch_;
  fs::create_directories(scratch);
  const std::string tag = std::to_string(::getpid()) + "-" + std::to_string(counter++);
  fs::path in = source;
  if (in.empty()) {
    in = scratch / ("in-" + tag + ".png");
    write_png(in, image);
  }
  const fs::path out = scratch / ("depth-" + tag + ".png");
  const ProcessResult r = run_process({program_, in.string(), out.string(), "0"});
  if (r.exit_status != 0 || !fs::exists(out))
    throw Error(ErrorCode::BackendUnavailable,
                program_ + " exited with status " + std::to_string(r.exit_status) + "; output: " + r.stdout_text);
  const Plane16 raw = read_png16(out);
  fs::remove(out);
  return raw.cast<double>() / 65535.0;
}

std::unique_ptr<DepthBackend> make_depth_backend(const std::string& name) {
  if (name == "stub" || name == "luminance") return std::make_unique<LuminanceDepthBackend>();
  if (name.rfind("external:", 0) == 0) return std::make_unique<ExternalDepthBackend>(name.substr(9));
  throw Error(ErrorCode::BackendUnavailable, "unknown depth backend '" + name + "'");
}

DepthMap estimate_depth(const ImageD& image, std::string image_id, DepthBackend& backend, const fs::path& source) {
  if (image.empty()) throw Error(ErrorCode::DecodeError, "empty image");
  PlaneD raw = backend.estimate(image, source);
  if (raw.size() == 0) throw Error(ErrorCode::BackendUnavailable, backend.id() + " returned an empty map");
  if (!raw.allFinite()) throw Error(ErrorCode::DecodeError, backend.id() + " returned non-finite depth");
  DepthMap map;
  map.native_height = static_cast<int>(raw.rows());
  map.native_width = static_cast<int>(raw.cols());
  map.values = resize_bilinear(raw, image.height(), image.width());
  map.source_image_id = std::move(image_id);
  return map;
}

DepthMap normalize_depth(DepthMap map) {
  if (map.values.size() > 0) {
    const double lo = map.values.minCoeff(), hi = map.values.maxCoeff();
    if (hi > lo) {
      map.values = (map.values - lo) / (hi - lo);
    } else {
      map.values.setConstant(0.5);
    }
  }
  map.normalized = true;
  return map;
}

void export_depth_png16(const DepthMap& map, const fs::path& path) {
  if (!map.normalized) throw Error(ErrorCode::NotNormalized, "normalize the depth map before export");
  const Plane16 pixels =
      map.values.unaryExpr([](double v) { return static_cast<std::uint16_t>(std::floor(v * 65535.0 + 0.5)); });
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_png16(path, pixels);
}

DepthMap import_depth_png16(const fs::path& path, std::string source_image_id) {
  DepthMap map;
  map.values = read_png16(path).cast<double>() / 65535.0;
  map.source_image_id = std::move(source_image_id);
  map.normalized = true;
  map.native_height = static_cast<int>(map.values.rows());
  map.native_width = static_cast<int>(map.values.cols());
  return map;
}

}  // namespace p2d
