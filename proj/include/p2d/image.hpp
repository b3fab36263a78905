#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace p2d {

/// One image channel, rows = height, cols = width.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneD = Plane<double>;
using Plane16 = Plane<std::uint16_t>;

/// Planar image with values nominally in [0,1]. Gray images have one plane, colour images three.
template <typename Scalar>
struct Image {
  std::vector<Plane<Scalar>> planes;

  static Image zeros(int channels, int height, int width) {
    Image img;
    img.planes.assign(static_cast<std::size_t>(channels), Plane<Scalar>::Zero(height, width));
    return img;
  }

  static Image constant(int channels, int height, int width, Scalar value) {
    Image img;
    img.planes.assign(static_cast<std::size_t>(channels), Plane<Scalar>::Constant(height, width, value));
    return img;
  }

  int channels() const { return static_cast<int>(planes.size()); }
  int height() const { return planes.empty() ? 0 : static_cast<int>(planes.front().rows()); }
  int width() const { return planes.empty() ? 0 : static_cast<int>(planes.front().cols()); }
  bool empty() const { return planes.empty() || planes.front().size() == 0; }

  bool same_shape(const Image& other) const {
    return channels() == other.channels() && height() == other.height() && width() == other.width();
  }

  friend bool operator==(const Image& a, const Image& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t c = 0; c < a.planes.size(); ++c)
      if (!(a.planes[c] == b.planes[c]).all()) return false;
    return true;
  }
};

using ImageD = Image<double>;

/// Rec. 601 luma for colour images, the plane itself for gray ones.
template <typename Scalar>
Plane<Scalar> to_gray(const Image<Scalar>& img) {
  if (img.channels() == 1) return img.planes[0];
  if (img.channels() >= 3)
    return Scalar(0.299) * img.planes[0] + Scalar(0.587) * img.planes[1] + Scalar(0.114) * img.planes[2];
  return img.planes.empty() ? Plane<Scalar>() : img.planes[0];
}

template <typename Scalar>
Image<Scalar> clamp01(Image<Scalar> img) {
  for (auto& p : img.planes) p = p.max(Scalar(0)).min(Scalar(1));
  return img;
}

/// Expands a gray image to three identical planes; colour images pass through.
ImageD to_rgb(const ImageD& img);

/// Bilinear resampling with pixel-centre alignment.
PlaneD resize_bilinear(const PlaneD& plane, int height, int width);
ImageD resize_bilinear(const ImageD& img, int height, int width);

/// Separable box blur with edge clamping, window (2*radius+1)^2.
PlaneD box_blur(const PlaneD& plane, int radius);

bool looks_like_png(std::span<const std::uint8_t> bytes);

/// Decodes 8/16-bit gray, gray+alpha, RGB, RGBA and palette PNGs. Alpha is dropped.
/// Throws Error(DecodeError) on malformed data.
ImageD decode_png(std::span<const std::uint8_t> bytes);
ImageD read_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG (1 or 3 channels), values clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const ImageD& img);

/// 16-bit single-channel PNG.
void write_png16(const std::filesystem::path& path, const Plane16& plane);
Plane16 read_png16(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace p2d
