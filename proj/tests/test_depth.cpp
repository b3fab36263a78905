#include "p2d/depth.hpp"
#include "p2d/error.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace p2d;
using p2d::testing::TempDir;

namespace {

DepthMap map_of(PlaneD values, bool normalized = false) {
  DepthMap m;
  m.values = std::move(values);
  m.normalized = normalized;
  return m;
}

PlaneD random_plane(Rng& rng, int h, int w, double lo = -3, double hi = 5) {
  PlaneD p(h, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(lo, hi);
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("depth") {
  TEST_CASE("luminance backend returns the grayscale map") {
    Rng rng(1);
    const ImageD img = testing::smooth_image(rng, 10, 14);
    LuminanceDepthBackend backend;
    const DepthMap d = estimate_depth(img, "x", backend);
    CHECK_FALSE(d.normalized);
    CHECK(d.values.isApprox(to_gray(img)));
    CHECK(d.native_height == 10);
    const DepthMap flat = estimate_depth(ImageD::constant(3, 6, 6, 0.3), "c", backend);
    CHECK((flat.values - flat.values(0, 0)).abs().maxCoeff() == 0.0);
  }

  TEST_CASE("normalize is affine, idempotent and order preserving") {
    PlaneD v(1, 3);
    v << 2, 4, 6;
    const DepthMap n = normalize_depth(map_of(v));
    CHECK(n.normalized);
    CHECK(n.values(0, 0) == 0.0);
    CHECK(n.values(0, 1) == 0.5);
    CHECK(n.values(0, 2) == 1.0);
    CHECK((normalize_depth(map_of(PlaneD::Constant(3, 3, 7.0))).values == 0.5).all());

    Rng rng(2);
    for (int i = 0; i < 10; ++i) {
      const DepthMap m = map_of(random_plane(rng, 9, 7));
      const DepthMap once = normalize_depth(m), twice = normalize_depth(once);
      CHECK((once.values == twice.values).all());
      for (Eigen::Index a = 0; a < m.values.size(); ++a)
        for (Eigen::Index b = 0; b < m.values.size(); ++b)
          if (m.values.data()[a] < m.values.data()[b]) CHECK(once.values.data()[a] < once.values.data()[b]);
    }
  }

  TEST_CASE("16-bit export endpoints and rounding") {
    TempDir dir("png16");
    PlaneD v(1, 4);
    v << 0.0, 1.0, 0.5, 1.0 / 3.0;
    export_depth_png16(map_of(v, true), dir / "d.png");
    const Plane16 raw = read_png16(dir / "d.png");
    CHECK(raw(0, 0) == 0);
    CHECK(raw(0, 1) == 65535);
    CHECK(raw(0, 2) == 32768);
    CHECK(raw(0, 3) == 21845);
    CHECK(code_of([&] { export_depth_png16(map_of(v, false), dir / "e.png"); }) == ErrorCode::NotNormalized);
  }

  TEST_CASE("16-bit round trip") {
    TempDir dir("roundtrip");
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
      const DepthMap m = normalize_depth(map_of(random_plane(rng, 11, 13)));
      export_depth_png16(m, dir / "d.png");
      const DepthMap back = import_depth_png16(dir / "d.png");
      CHECK(back.normalized);
      CHECK((back.values - m.values).abs().maxCoeff() <= 1.0 / 65535);
    }
  }

  TEST_CASE("constant 2x2 map gives the hand-built box") {
    const ReliefMesh mesh = depth_to_relief_mesh(map_of(PlaneD::Constant(2, 2, 1.0), true), 1.0, 10.0, 2.0);
    CHECK(mesh.triangles.rows() == 12);
    CHECK(mesh.vertices.rows() == 8);
    std::set<std::array<double, 3>> got, want;
    for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
      got.insert({mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2)});
    for (double x : {0.0, 1.0})
      for (double y : {0.0, 1.0})
        for (double z : {0.0, 12.0}) want.insert({x, y, z});
    CHECK(got == want);
    CHECK(oracle::edges_paired(mesh.triangles));
    CHECK(signed_volume(mesh) == doctest::Approx(12.0).epsilon(1e-12));
  }

  TEST_CASE("random meshes are watertight, outward and within the z range") {
    Rng rng(4);
    for (int i = 0; i < 5; ++i) {
      const int h = 2 + static_cast<int>(rng.below(15)), w = 2 + static_cast<int>(rng.below(15));
      const DepthMap m = normalize_depth(map_of(random_plane(rng, h, w)));
      const ReliefMesh mesh = depth_to_relief_mesh(m, 0.2, 8.0, 2.0);
      CHECK(is_watertight(mesh));
      CHECK(oracle::edges_paired(mesh.triangles));
      CHECK(signed_volume(mesh) > 0);
      CHECK(mesh.vertices.rows() == 2 * h * w);
      CHECK(mesh.triangles.rows() == 4 * (h - 1) * (w - 1) + 4 * (h - 1) + 4 * (w - 1));
      const auto top = mesh.vertices.topRows(h * w).col(2);
      CHECK(top.minCoeff() == doctest::Approx(2.0));
      CHECK(top.maxCoeff() == doctest::Approx(10.0));
    }
  }

  TEST_CASE("a flipped triangle breaks watertightness") {
    ReliefMesh mesh = depth_to_relief_mesh(map_of(PlaneD::Constant(3, 3, 0.5), true), 1, 1, 1);
    std::swap(mesh.triangles(0, 1), mesh.triangles(0, 2));
    CHECK_FALSE(is_watertight(mesh));
    CHECK_FALSE(oracle::edges_paired(mesh.triangles));
  }

  TEST_CASE("mesh argument errors") {
    const DepthMap ok = map_of(PlaneD::Constant(3, 3, 0.5), true);
    CHECK(code_of([&] { depth_to_relief_mesh(map_of(PlaneD::Constant(1, 5, 0.5), true), 1, 1, 1); }) == ErrorCode::TooSmall);
    CHECK(code_of([&] { depth_to_relief_mesh(ok, 0, 1, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { depth_to_relief_mesh(ok, 1, -1, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { depth_to_relief_mesh(map_of(PlaneD::Constant(3, 3, 0.5), false), 1, 1, 1); }) ==
          ErrorCode::NotNormalized);
  }

  TEST_CASE("binary STL layout") {
    TempDir dir("stl");
    const ReliefMesh mesh = depth_to_relief_mesh(map_of(PlaneD::Constant(2, 2, 1.0), true), 1, 10, 2);
    const auto bytes = stl_bytes(mesh);
    REQUIRE(bytes.size() == 84 + 50 * 12);
    const std::uint32_t count = bytes[80] | bytes[81] << 8 | bytes[82] << 16 | static_cast<std::uint32_t>(bytes[83]) << 24;
    CHECK(count == 12);
    write_stl(mesh, dir / "m.stl");
    CHECK(std::filesystem::file_size(dir / "m.stl") == bytes.size());
    write_obj(mesh, dir / "m.obj");
    CHECK(std::filesystem::file_size(dir / "m.obj") > 0);
  }

  TEST_CASE("external depth backend failures are reported") {
    ExternalDepthBackend missing("/nonexistent/depth");
    CHECK(code_of([&] { estimate_depth(ImageD::constant(3, 4, 4, 0.5), "x", missing); }) == ErrorCode::BackendUnavailable);
    CHECK(code_of([] { make_depth_backend("midas-magic"); }) == ErrorCode::BackendUnavailable);
  }
}
