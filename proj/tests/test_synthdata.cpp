#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "airnet/synthdata.hpp"

using namespace airnet;

namespace {

SdfShape sphere_shape(double r, Vec3 c = {0, 0, 0}) {
  SdfPrimitive p;
  p.kind = SdfPrimitive::Kind::Sphere;
  p.radius = r;
  p.center = c;
  return SdfShape{{p}};
}

}  // namespace

TEST_CASE("sphere surface samples sit on the sphere", "[synthdata]") {
  auto shape = sphere_shape(0.35, {0.05, -0.02, 0.1});
  auto pc = sample_surface(shape, 2000, 0.0, RngStream(1, 0));
  for (const Vec3& p : pc.points)
    REQUIRE(std::abs((p - Vec3{0.05, -0.02, 0.1}).norm() - 0.35) <= 1e-6);
}

TEST_CASE("box and torus samples lie on their analytic surfaces", "[synthdata]") {
  SdfPrimitive box;
  box.kind = SdfPrimitive::Kind::Box;
  box.half_extents = {0.3, 0.2, 0.25};
  SdfShape bshape{{box}};
  for (const Vec3& p : sample_surface(bshape, 1500, 0.0, RngStream(2, 0)).points)
    REQUIRE(std::abs(bshape.sdf(p)) <= 1e-9);

  SdfPrimitive torus;
  torus.kind = SdfPrimitive::Kind::Torus;
  torus.major_radius = 0.25;
  torus.minor_radius = 0.12;
  SdfShape tshape{{torus}};
  for (const Vec3& p : sample_surface(tshape, 1500, 0.0, RngStream(3, 0)).points)
    REQUIRE(std::abs(tshape.sdf(p)) <= 1e-9);
}

TEST_CASE("measurement noise has half-normal distance statistics", "[synthdata]") {
  double sigma = 0.005;
  auto shape = sphere_shape(0.4);
  auto pc = sample_surface(shape, 10000, sigma, RngStream(4, 0));
  double mean = 0;
  for (const Vec3& p : pc.points) mean += std::abs(shape.sdf(p));
  mean /= static_cast<double>(pc.points.size());
  double expect = sigma * std::sqrt(2.0 / M_PI);
  REQUIRE(std::abs(mean - expect) / expect < 0.10);
}

TEST_CASE("union surface sampling rejects interior points", "[synthdata]") {
  SdfShape shape = sphere_shape(0.3, {-0.1, 0, 0});
  SdfPrimitive other;
  other.kind = SdfPrimitive::Kind::Box;
  other.half_extents = {0.2, 0.2, 0.2};
  other.center = {0.15, 0, 0};
  shape.parts.push_back(other);

  auto pc = sample_surface(shape, 3000, 0.0, RngStream(5, 0));
  for (const Vec3& p : pc.points) REQUIRE(shape.sdf(p) >= -1e-7);
}

TEST_CASE("uniform supervision matches the analytic volume fraction", "[synthdata]") {
  auto shape = sphere_shape(0.4);
  auto sup = sample_supervision(shape, 100000, SupervisionRegime::Uniform, RngStream(6, 0));
  double frac = 0;
  for (auto o : sup.occ) frac += o;
  frac /= static_cast<double>(sup.size());
  double expect = 4.0 / 3.0 * M_PI * 0.4 * 0.4 * 0.4;  // ~0.268
  REQUIRE(std::abs(frac - expect) < 0.01);
}

TEST_CASE("near-surface supervision stays within 3 sigma of the surface", "[synthdata]") {
  auto shape = sphere_shape(0.35);
  std::size_t t = 4000;
  auto sup = sample_supervision(shape, t, SupervisionRegime::NearSurface, RngStream(7, 0));
  std::size_t first_half = (t + 1) / 2;
  std::size_t within = 0;
  for (std::size_t i = 0; i < t; ++i) {
    double sigma = i < first_half ? 0.01 : 0.05;
    if (std::abs(shape.sdf(sup.q[i])) <= 3 * sigma) ++within;
  }
  REQUIRE(static_cast<double>(within) / static_cast<double>(t) >= 0.95);
}

TEST_CASE("supervision labels equal the sdf sign", "[synthdata]") {
  auto shape = make_random_shape(RngStream(8, 0));
  auto sup = sample_supervision(shape, 5000, SupervisionRegime::Uniform, RngStream(9, 0));
  for (std::size_t i = 0; i < sup.size(); ++i)
    REQUIRE(sup.occ[i] == (shape.sdf(sup.q[i]) <= 0 ? 1 : 0));
}

TEST_CASE("datasets are a pure function of the seed", "[synthdata]") {
  DatasetManifest cfg;
  cfg.count = 4;
  cfg.seed = 99;
  cfg.points = 60;
  cfg.sup_points = 128;
  auto a = make_dataset(cfg);
  auto b = make_dataset(cfg);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].input.points.size() == b[i].input.points.size());
    for (std::size_t j = 0; j < a[i].input.points.size(); ++j)
      REQUIRE(a[i].input.points[j] == b[i].input.points[j]);
    REQUIRE(a[i].supervision.occ == b[i].supervision.occ);
  }

  cfg.count = 0;
  REQUIRE(make_dataset(cfg).empty());
}

TEST_CASE("uniform-regime class balance stays within [0.05, 0.6]", "[synthdata]") {
  RngStream root(10, 0);
  for (int i = 0; i < 100; ++i) {
    auto shape = make_random_shape(split(split(root, "shape"), static_cast<std::uint64_t>(i)));
    // margin check: the shape fits inside the unit cube with >= 0.05 slack
    for (const auto& part : shape.parts) {
      Vec3 e = part.extent();
      REQUIRE(std::abs(part.center.x) + e.x <= 0.45 + 1e-12);
      REQUIRE(std::abs(part.center.y) + e.y <= 0.45 + 1e-12);
      REQUIRE(std::abs(part.center.z) + e.z <= 0.45 + 1e-12);
    }
    auto sup = sample_supervision(shape, 16384, SupervisionRegime::Uniform,
                                  split(split(root, "sup"), static_cast<std::uint64_t>(i)));
    double frac = 0;
    for (auto o : sup.occ) frac += o;
    frac /= static_cast<double>(sup.size());
    REQUIRE(frac >= 0.05);
    REQUIRE(frac <= 0.6);
  }
}

TEST_CASE("dataset directory round trip", "[synthdata]") {
  DatasetManifest cfg;
  cfg.count = 3;
  cfg.seed = 123;
  cfg.points = 50;
  cfg.sup_points = 100;
  cfg.regime = SupervisionRegime::NearSurface;
  auto items = make_dataset(cfg);

  auto dir = (std::filesystem::temp_directory_path() / "airnet_ds_test").string();
  std::filesystem::remove_all(dir);
  save_dataset(dir, items, cfg);
  auto loaded = load_dataset(dir);

  REQUIRE(loaded.items.size() == 3);
  REQUIRE(loaded.manifest.seed == 123);
  REQUIRE(loaded.manifest.regime == SupervisionRegime::NearSurface);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(loaded.items[i].input.points.size() == items[i].input.points.size());
    for (std::size_t j = 0; j < items[i].input.points.size(); ++j)
      REQUIRE((loaded.items[i].input.points[j] - items[i].input.points[j]).norm() == 0.0);
    REQUIRE(loaded.items[i].supervision.occ == items[i].supervision.occ);
    for (std::size_t j = 0; j < items[i].supervision.size(); ++j)
      REQUIRE((loaded.items[i].supervision.q[j] - items[i].supervision.q[j]).norm() < 1e-6);
    // shape round-trips through json exactly
    RngStream probe(7, 7);
    for (int k = 0; k < 50; ++k) {
      Vec3 p{uniform_in(probe, -0.5, 0.5), uniform_in(probe, -0.5, 0.5),
             uniform_in(probe, -0.5, 0.5)};
      REQUIRE(loaded.items[i].shape.sdf(p) == items[i].shape.sdf(p));
    }
  }
  std::filesystem::remove_all(dir);
}
