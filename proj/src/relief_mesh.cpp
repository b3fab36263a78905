#include "p2d/depth.hpp"

#include "p2d/error.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace p2d {
namespace fs = std::filesystem;

namespace {

std::uint64_t edge_key(std::uint32_t from, std::uint32_t to) { return (std::uint64_t{from} << 32) | to; }

}  // namespace

ReliefMesh depth_to_relief_mesh(const DepthMap& map, double pitch_mm, double relief_height_mm,
                                double base_thickness_mm) {
  if (!map.normalized) throw Error(ErrorCode::NotNormalized, "normalize the depth map before meshing");
  if (!(pitch_mm > 0) || !(relief_height_mm > 0) || !(base_thickness_mm > 0))
    throw Error(ErrorCode::InvalidArgument, "pitch, relief height and base thickness must be positive");
  const auto h = static_cast<std::uint32_t>(map.values.rows());
  const auto w = static_cast<std::uint32_t>(map.values.cols());
  if (h < 2 || w < 2) throw Error(ErrorCode::TooSmall, "relief needs at least a 2x2 depth map");

  ReliefMesh mesh;
  mesh.base_thickness = base_thickness_mm;
  mesh.grid_height = static_cast<int>(h);
  mesh.grid_width = static_cast<int>(w);
  const std::uint32_t plane = h * w;
  mesh.vertices.resize(2 * plane, 3);
  for (std::uint32_t r = 0; r < h; ++r)
    for (std::uint32_t c = 0; c < w; ++c) {
      const std::uint32_t i = r * w + c;
      const double x = c * pitch_mm, y = (h - 1 - r) * pitch_mm;
      mesh.vertices.row(i) << x, y, base_thickness_mm + map.values(r, c) * relief_height_mm;
      mesh.vertices.row(plane + i) << x, y, 0.0;
    }

  std::vector<std::array<std::uint32_t, 3>> tris;
  tris.reserve(4 * (h - 1) * (w - 1) + 4 * (h - 1) + 4 * (w - 1));
  for (std::uint32_t r = 0; r + 1 < h; ++r)
    for (std::uint32_t c = 0; c + 1 < w; ++c) {
      const std::uint32_t a = r * w + c, b = a + 1, d = a + w, e = d + 1;
      tris.push_back({d, e, b});  // counter-clockwise seen from +z
      tris.push_back({d, b, a});
      tris.push_back({plane + d, plane + b, plane + e});
      tris.push_back({plane + d, plane + a, plane + b});
    }

  // Walls: every top edge without a reverse twin is on the border.
  std::unordered_set<std::uint64_t> top_edges;
  const std::size_t top_count = tris.size();
  for (std::size_t t = 0; t < top_count; t += 4)
    for (std::size_t k = t; k < t + 2; ++k)
      for (int j = 0; j < 3; ++j) top_edges.insert(edge_key(tris[k][j], tris[k][(j + 1) % 3]));
  for (std::size_t t = 0; t < top_count; t += 4)
    for (std::size_t k = t; k < t + 2; ++k)
      for (int j = 0; j < 3; ++j) {
        const std::uint32_t u = tris[k][j], v = tris[k][(j + 1) % 3];
        if (top_edges.count(edge_key(v, u))) continue;
        tris.push_back({v, u, plane + u});
        tris.push_back({v, plane + u, plane + v});
      }

  mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t i = 0; i < tris.size(); ++i)
    mesh.triangles.row(static_cast<Eigen::Index>(i)) << tris[i][0], tris[i][1], tris[i][2];
  return mesh;
}

bool is_watertight(const ReliefMesh& mesh) {
  std::unordered_map<std::uint64_t, int> directed;
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t)
    for (int j = 0; j < 3; ++j) {
      const std::uint32_t u = mesh.triangles(t, j), v = mesh.triangles(t, (j + 1) % 3);
      if (u == v) return false;
      if (++directed[edge_key(u, v)] > 1) return false;
    }
  for (const auto& [key, count] : directed) {
    const auto u = static_cast<std::uint32_t>(key >> 32), v = static_cast<std::uint32_t>(key & 0xffffffffu);
    if (!directed.count(edge_key(v, u))) return false;
  }
  return !directed.empty();
}

double signed_volume(const ReliefMesh& mesh) {
  double six_v = 0.0;
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    const Eigen::Vector3d a = mesh.vertices.row(mesh.triangles(t, 0));
    const Eigen::Vector3d b = mesh.vertices.row(mesh.triangles(t, 1));
    const Eigen::Vector3d c = mesh.vertices.row(mesh.triangles(t, 2));
    six_v += a.dot(b.cross(c));
  }
  return six_v / 6.0;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

}  // namespace

std::vector<std::uint8_t> stl_bytes(const ReliefMesh& mesh) {
  std::vector<std::uint8_t> out;
  const auto count = static_cast<std::uint32_t>(mesh.triangles.rows());
  out.reserve(84 + 50 * static_cast<std::size_t>(count));
  std::string header = "p2d relief mesh, millimetres, z up";
  header.resize(80, ' ');
  out.insert(out.end(), header.begin(), header.end());
  put_u32(out, count);
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    const Eigen::Vector3d a = mesh.vertices.row(mesh.triangles(t, 0));
    const Eigen::Vector3d b = mesh.vertices.row(mesh.triangles(t, 1));
    const Eigen::Vector3d c = mesh.vertices.row(mesh.triangles(t, 2));
    Eigen::Vector3d n = (b - a).cross(c - a);
    if (n.norm() > 0) n.normalize();
    for (int k = 0; k < 3; ++k) put_f32(out, static_cast<float>(n[k]));
    for (const auto* v : {&a, &b, &c})
      for (int k = 0; k < 3; ++k) put_f32(out, static_cast<float>((*v)[k]));
    out.push_back(0);
    out.push_back(0);
  }
  return out;
}

void write_stl(const ReliefMesh& mesh, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto bytes = stl_bytes(mesh);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_obj(const ReliefMesh& mesh, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.precision(9);
  out << "# p2d relief mesh, millimetres\n";
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t)
    out << "f " << mesh.triangles(t, 0) + 1 << ' ' << mesh.triangles(t, 1) + 1 << ' ' << mesh.triangles(t, 2) + 1
        << '\n';
}

}  // namespace p2d
