#include "p2d/image.hpp"

#include "p2d/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

namespace p2d {

ImageD to_rgb(const ImageD& img) {
  if (img.channels() != 1) return img;
  ImageD out;
  out.planes.assign(3, img.planes[0]);
  return out;
}

PlaneD resize_bilinear(const PlaneD& plane, int height, int width) {
  if (plane.rows() == height && plane.cols() == width) return plane;
  PlaneD out(height, width);
  const double sy = static_cast<double>(plane.rows()) / height;
  const double sx = static_cast<double>(plane.cols()) / width;
  const Eigen::Index maxr = plane.rows() - 1;
  const Eigen::Index maxc = plane.cols() - 1;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(maxr));
    const auto y0 = static_cast<Eigen::Index>(std::floor(fy));
    const auto y1 = std::min(y0 + 1, maxr);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(maxc));
      const auto x0 = static_cast<Eigen::Index>(std::floor(fx));
      const auto x1 = std::min(x0 + 1, maxc);
      const double wx = fx - x0;
      const double top = (1 - wx) * plane(y0, x0) + wx * plane(y0, x1);
      const double bottom = (1 - wx) * plane(y1, x0) + wx * plane(y1, x1);
      out(y, x) = (1 - wy) * top + wy * bottom;
    }
  }
  return out;
}

ImageD resize_bilinear(const ImageD& img, int height, int width) {
  ImageD out;
  out.planes.reserve(img.planes.size());
  for (const auto& p : img.planes) out.planes.push_back(resize_bilinear(p, height, width));
  return out;
}

PlaneD box_blur(const PlaneD& plane, int radius) {
  if (radius <= 0) return plane;
  const Eigen::Index h = plane.rows(), w = plane.cols();
  const double norm = 1.0 / (2 * radius + 1);
  PlaneD tmp(h, w), out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) acc += plane(y, std::clamp<Eigen::Index>(x + d, 0, w - 1));
      tmp(y, x) = acc * norm;
    }
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) acc += tmp(std::clamp<Eigen::Index>(y + d, 0, h - 1), x);
      out(y, x) = acc * norm;
    }
  return out;
}

bool looks_like_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

namespace {

struct MemoryReader {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (reader->offset + count > reader->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, reader->bytes.data() + reader->offset, count);
  reader->offset += count;
}

void silent_warning(png_structp, png_const_charp) {}

// Decodes into 16-bit samples so 8- and 16-bit inputs share one path.
// Returns false on any libpng error. No objects with destructors are created
// between setjmp and the end of decoding besides the preallocated buffers.
bool decode_raw(std::span<const std::uint8_t> bytes, std::vector<std::uint16_t>& samples, png_uint_32& width,
                png_uint_32& height, int& channels) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  MemoryReader reader{bytes, 0};
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &reader, read_from_memory);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth < 16) png_set_expand_16(png);
  png_set_swap(png);  // little-endian 16-bit samples in memory
  png_read_update_info(png, info);
  channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  samples.resize(buffer.size() / 2);
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
  return true;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

bool write_raw(const std::filesystem::path& path, const std::vector<png_byte>& buffer, png_uint_32 width,
               png_uint_32 height, int color_type, int bit_depth) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) return false;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(buffer.data() + y * stride);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

ImageD decode_png(std::span<const std::uint8_t> bytes) {
  if (!looks_like_png(bytes)) throw Error(ErrorCode::DecodeError, "not a PNG stream");
  std::vector<std::uint16_t> samples;
  png_uint_32 width = 0, height = 0;
  int channels = 0;
  if (!decode_raw(bytes, samples, width, height, channels) || width == 0 || height == 0)
    throw Error(ErrorCode::DecodeError, "malformed PNG stream");

  const int color_channels = channels >= 3 ? 3 : 1;
  ImageD img = ImageD::zeros(color_channels, static_cast<int>(height), static_cast<int>(width));
  for (png_uint_32 y = 0; y < height; ++y)
    for (png_uint_32 x = 0; x < width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * width + x) * channels;
      for (int c = 0; c < color_channels; ++c) img.planes[c](y, x) = samples[base + c] / 65535.0;
    }
  return img;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageD read_png(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const ImageD& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw Error(ErrorCode::ShapeError, "PNG export needs 1 or 3 channels");
  const auto w = static_cast<png_uint_32>(img.width());
  const auto h = static_cast<png_uint_32>(img.height());
  const int ch = img.channels();
  std::vector<png_byte> buffer(static_cast<std::size_t>(w) * h * ch);
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double v = std::clamp(img.planes[c](y, x), 0.0, 1.0);
        buffer[(static_cast<std::size_t>(y) * w + x) * ch + c] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
      }
  if (!write_raw(path, buffer, w, h, ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8))
    throw Error(ErrorCode::Io, "cannot write " + path.string());
}

void write_png16(const std::filesystem::path& path, const Plane16& plane) {
  const auto w = static_cast<png_uint_32>(plane.cols());
  const auto h = static_cast<png_uint_32>(plane.rows());
  std::vector<png_byte> buffer(static_cast<std::size_t>(w) * h * 2);
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x) {
      const std::uint16_t v = plane(y, x);
      const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 2;
      buffer[i] = static_cast<png_byte>(v >> 8);  // PNG stores big-endian
      buffer[i + 1] = static_cast<png_byte>(v & 0xff);
    }
  if (!write_raw(path, buffer, w, h, PNG_COLOR_TYPE_GRAY, 16))
    throw Error(ErrorCode::Io, "cannot write " + path.string());
}

Plane16 read_png16(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (!looks_like_png(bytes)) throw Error(ErrorCode::DecodeError, path.string() + ": not a PNG stream");
  std::vector<std::uint16_t> samples;
  png_uint_32 width = 0, height = 0;
  int channels = 0;
  if (!decode_raw(bytes, samples, width, height, channels))
    throw Error(ErrorCode::DecodeError, path.string() + ": malformed PNG stream");
  Plane16 out(height, width);
  for (png_uint_32 y = 0; y < height; ++y)
    for (png_uint_32 x = 0; x < width; ++x)
      out(y, x) = samples[(static_cast<std::size_t>(y) * width + x) * channels];
  return out;
}

}  // namespace p2d
