#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "airnet/extraction.hpp"
#include "airnet/rng.hpp"

using namespace airnet;

namespace {

OccBatchFn sphere_occ(double r) {
  return [r](const std::vector<Vec3>& pts) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pts[i].norm() <= r ? 1.0 : 0.0;
    return out;
  };
}

// smooth random field: a few gaussian bumps, squashed into (0,1)
OccBatchFn smooth_field(std::uint64_t seed) {
  RngStream s(seed, 42);
  struct Bump {
    Vec3 c;
    double a, w;
  };
  auto bumps = std::make_shared<std::vector<Bump>>();
  int n = 3 + static_cast<int>(s.next_below(3));
  for (int i = 0; i < n; ++i)
    bumps->push_back({{uniform_in(s, -0.3, 0.3), uniform_in(s, -0.3, 0.3),
                       uniform_in(s, -0.3, 0.3)},
                      uniform_in(s, 2.0, 5.0),
                      uniform_in(s, 0.12, 0.25)});
  return [bumps](const std::vector<Vec3>& pts) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double g = -1.5;
      for (const auto& b : *bumps)
        g += b.a * std::exp(-(pts[i] - b.c).norm2() / (2 * b.w * b.w));
      out[i] = 1.0 / (1.0 + std::exp(-4.0 * g));
    }
    return out;
  };
}

bool straddle_patterns_match(const OccupancyGrid& a, const OccupancyGrid& b, double tau) {
  if (a.res != b.res) return false;
  for (std::size_t i = 0; i < a.res; ++i)
    for (std::size_t j = 0; j < a.res; ++j)
      for (std::size_t k = 0; k < a.res; ++k)
        if (a.cell_straddles(i, j, k, tau) != b.cell_straddles(i, j, k, tau)) return false;
  return true;
}

}  // namespace

TEST_CASE("mise on a constant field stops after the coarse level", "[extraction]") {
  OccBatchFn zero = [](const std::vector<Vec3>& pts) {
    return std::vector<double>(pts.size(), 0.0);
  };
  auto grid = mise(zero, {-0.5, -0.5, -0.5}, {1, 1, 1}, 8, 2, 0.5);
  REQUIRE(grid.eval_count == 9 * 9 * 9);
  REQUIRE(marching_cubes(grid, 0.5).empty());
}

TEST_CASE("mise equals dense evaluation on the analytic sphere", "[extraction]") {
  Vec3 origin{-0.5, -0.5, -0.5}, size{1, 1, 1};
  auto occ = sphere_occ(0.4);
  auto fine = mise(occ, origin, size, 32, 2, 0.5);
  auto dense = dense_grid(occ, origin, size, 128);
  REQUIRE(straddle_patterns_match(fine, dense, 0.5));
  // efficiency: far fewer evaluations than the dense grid
  REQUIRE(fine.eval_count < dense.eval_count * 15 / 100);
}

TEST_CASE("mise equals dense evaluation on random smooth fields", "[extraction]") {
  Vec3 origin{-0.5, -0.5, -0.5}, size{1, 1, 1};
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto occ = smooth_field(seed);
    auto fine = mise(occ, origin, size, 16, 2, 0.5);
    auto dense = dense_grid(occ, origin, size, 64);
    REQUIRE(straddle_patterns_match(fine, dense, 0.5));
  }
}

TEST_CASE("mise rejects non-finite occupancy values", "[extraction]") {
  OccBatchFn bad = [](const std::vector<Vec3>& pts) {
    return std::vector<double>(pts.size(), std::numeric_limits<double>::quiet_NaN());
  };
  REQUIRE_THROWS_AS(mise(bad, {-0.5, -0.5, -0.5}, {1, 1, 1}, 8, 1, 0.5), NumericError);
}

TEST_CASE("marching cubes recovers an axis-aligned plane to 1e-6", "[extraction]") {
  double a = 0.037;  // off-lattice plane position
  OccBatchFn half = [a](const std::vector<Vec3>& pts) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
      out[i] = std::clamp(0.5 + (a - pts[i].x), 0.0, 1.0);  // occupied where x < a
    return out;
  };
  auto grid = dense_grid(half, {-0.5, -0.5, -0.5}, {1, 1, 1}, 16);
  auto mesh = marching_cubes(grid, 0.5);
  REQUIRE(!mesh.empty());
  for (const Vec3& v : mesh.vertices) REQUIRE(std::abs(v.x - a) <= 1e-6);
}

TEST_CASE("sphere mesh is accurate, watertight, and outward-oriented", "[extraction]") {
  auto occ = sphere_occ(0.4);
  auto grid = mise(occ, {-0.5, -0.5, -0.5}, {1, 1, 1}, 32, 2, 0.5);
  auto mesh = marching_cubes(grid, 0.5);
  REQUIRE(!mesh.empty());
  for (const Vec3& v : mesh.vertices) REQUIRE(std::abs(v.norm() - 0.4) <= 2.0 / 128.0);
  REQUIRE(is_watertight(mesh));
  // occupied = inside, so normals must point away from the center
  std::size_t outward = 0;
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& t = mesh.triangles[f];
    Vec3 c = (mesh.vertices[static_cast<std::size_t>(t[0])] +
              mesh.vertices[static_cast<std::size_t>(t[1])] +
              mesh.vertices[static_cast<std::size_t>(t[2])]) *
             (1.0 / 3.0);
    if (mesh.face_normal(f).dot(c) > 0) ++outward;
  }
  REQUIRE(outward == mesh.triangles.size());
}

TEST_CASE("torus mesh is watertight", "[extraction]") {
  OccBatchFn occ = [](const std::vector<Vec3>& pts) {
    std::vector<double> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double ring = std::sqrt(pts[i].x * pts[i].x + pts[i].y * pts[i].y) - 0.28;
      out[i] = std::sqrt(ring * ring + pts[i].z * pts[i].z) <= 0.12 ? 1.0 : 0.0;
    }
    return out;
  };
  auto grid = mise(occ, {-0.5, -0.5, -0.5}, {1, 1, 1}, 32, 1, 0.5);
  auto mesh = marching_cubes(grid, 0.5);
  REQUIRE(is_watertight(mesh));
}

TEST_CASE("obj files round trip", "[extraction]") {
  auto occ = sphere_occ(0.3);
  auto mesh = marching_cubes(dense_grid(occ, {-0.5, -0.5, -0.5}, {1, 1, 1}, 16), 0.5);
  auto path = (std::filesystem::temp_directory_path() / "airnet_mesh.obj").string();
  save_obj(path, mesh);
  auto loaded = load_obj(path);
  REQUIRE(loaded.vertices.size() == mesh.vertices.size());
  REQUIRE(loaded.triangles.size() == mesh.triangles.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    REQUIRE((loaded.vertices[i] - mesh.vertices[i]).norm() == 0.0);  // shortest round-trip text
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
    REQUIRE(loaded.triangles[i] == mesh.triangles[i]);
  std::filesystem::remove(path);
}
