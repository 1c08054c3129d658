#ifndef AIRNET_SYNTHDATA_HPP
#define AIRNET_SYNTHDATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "airnet/geometry.hpp"
#include "airnet/rng.hpp"

namespace airnet {

// Watertight primitives with exact signed distance (negative inside). Shapes
// are sized to sit inside the unit cube [-0.5, 0.5]^3 with margin >= 0.05.
struct SdfPrimitive {
  enum class Kind { Sphere, Box, Torus };
  Kind kind = Kind::Sphere;
  Vec3 center;
  double scale = 1.0;
  double radius = 0.3;      // sphere
  Vec3 half_extents;        // box
  double major_radius = 0;  // torus (ring in the xy-plane)
  double minor_radius = 0;

  double sdf(const Vec3& p) const {
    Vec3 q = (p - center) * (1.0 / scale);
    double d = 0;
    switch (kind) {
      case Kind::Sphere:
        d = q.norm() - radius;
        break;
      case Kind::Box: {
        Vec3 a{std::abs(q.x) - half_extents.x, std::abs(q.y) - half_extents.y,
               std::abs(q.z) - half_extents.z};
        Vec3 outside{std::max(a.x, 0.0), std::max(a.y, 0.0), std::max(a.z, 0.0)};
        d = outside.norm() + std::min(std::max(a.x, std::max(a.y, a.z)), 0.0);
        break;
      }
      case Kind::Torus: {
        double ring = std::sqrt(q.x * q.x + q.y * q.y) - major_radius;
        d = std::sqrt(ring * ring + q.z * q.z) - minor_radius;
        break;
      }
    }
    return d * scale;
  }

  double surface_area() const {
    double a = 0;
    switch (kind) {
      case Kind::Sphere:
        a = 4.0 * M_PI * radius * radius;
        break;
      case Kind::Box:
        a = 8.0 * (half_extents.x * half_extents.y + half_extents.y * half_extents.z +
                   half_extents.z * half_extents.x);
        break;
      case Kind::Torus:
        a = 4.0 * M_PI * M_PI * major_radius * minor_radius;
        break;
    }
    return a * scale * scale;
  }

  // axis-aligned extent from the center
  Vec3 extent() const {
    switch (kind) {
      case Kind::Sphere:
        return Vec3{radius, radius, radius} * scale;
      case Kind::Box:
        return half_extents * scale;
      case Kind::Torus:
        return Vec3{major_radius + minor_radius, major_radius + minor_radius, minor_radius} *
               scale;
    }
    return {};
  }

  Vec3 sample_surface_point(RngStream& s) const {
    Vec3 q;
    switch (kind) {
      case Kind::Sphere: {
        double z = uniform_in(s, -1.0, 1.0);
        double phi = uniform_in(s, 0.0, 2.0 * M_PI);
        double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        q = Vec3{rho * std::cos(phi), rho * std::sin(phi), z} * radius;
        break;
      }
      case Kind::Box: {
        double ax = half_extents.y * half_extents.z;
        double ay = half_extents.x * half_extents.z;
        double az = half_extents.x * half_extents.y;
        double pick = uniform_in(s, 0.0, ax + ay + az);
        double u = uniform_in(s, -1.0, 1.0), v = uniform_in(s, -1.0, 1.0);
        double side = s.next_double() < 0.5 ? -1.0 : 1.0;
        if (pick < ax)
          q = {side * half_extents.x, u * half_extents.y, v * half_extents.z};
        else if (pick < ax + ay)
          q = {u * half_extents.x, side * half_extents.y, v * half_extents.z};
        else
          q = {u * half_extents.x, v * half_extents.y, side * half_extents.z};
        break;
      }
      case Kind::Torus: {
        double theta = uniform_in(s, 0.0, 2.0 * M_PI);
        double phi = 0;
        // area element is proportional to R + r*cos(phi)
        for (;;) {
          phi = uniform_in(s, 0.0, 2.0 * M_PI);
          double accept = (major_radius + minor_radius * std::cos(phi)) /
                          (major_radius + minor_radius);
          if (s.next_double() < accept) break;
        }
        double ring = major_radius + minor_radius * std::cos(phi);
        q = {ring * std::cos(theta), ring * std::sin(theta), minor_radius * std::sin(phi)};
        break;
      }
    }
    return center + q * scale;
  }
};

struct SdfShape {
  std::vector<SdfPrimitive> parts;

  double sdf(const Vec3& p) const {
    require(!parts.empty(), "SdfShape: no parts");
    double d = parts[0].sdf(p);
    for (std::size_t i = 1; i < parts.size(); ++i) d = std::min(d, parts[i].sdf(p));
    return d;
  }

  bool inside(const Vec3& p) const { return sdf(p) <= 0.0; }
};

struct OccupancySampleSet {
  std::vector<Vec3> q;
  std::vector<std::uint8_t> occ;

  std::size_t size() const { return q.size(); }
};

enum class SupervisionRegime { NearSurface, Uniform };

// Area-uniform surface samples; union surfaces are sampled per part and
// rejected when interior to another part. Isotropic Gaussian noise of the
// given sigma is added afterwards.
inline PointCloud sample_surface(const SdfShape& shape, std::size_t n, double noise_sigma,
                                 RngStream stream) {
  require(n >= 1, "sample_surface: need at least one sample");
  require(!shape.parts.empty(), "sample_surface: degenerate shape");
  std::vector<double> cum;
  double total = 0;
  for (const auto& part : shape.parts) {
    total += part.surface_area();
    cum.push_back(total);
  }
  require(total > 0, "sample_surface: degenerate shape (zero area)");

  PointCloud pc;
  pc.points.reserve(n);
  std::size_t attempts = 0, cap = 10000 + 400 * n;
  while (pc.points.size() < n) {
    require(++attempts <= cap, "sample_surface: rejection cap hit (degenerate union)");
    double pick = uniform_in(stream, 0.0, total);
    std::size_t part = static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    if (part >= shape.parts.size()) part = shape.parts.size() - 1;
    Vec3 p = shape.parts[part].sample_surface_point(stream);
    bool interior = false;
    for (std::size_t i = 0; i < shape.parts.size() && !interior; ++i)
      if (i != part && shape.parts[i].sdf(p) < -1e-9) interior = true;
    if (!interior) pc.points.push_back(p);
  }
  if (noise_sigma > 0) {
    for (Vec3& p : pc.points) {
      auto g = gaussian(stream, 3, noise_sigma);
      p += {g[0], g[1], g[2]};
    }
  }
  return pc;
}

// Supervision pairs (Q, O). near_surface displaces surface samples by
// Gaussian offsets, one half-batch each with sigma 0.01 and 0.05; uniform
// draws i.i.d. points in the unit cube. Labels are the analytic sdf sign.
inline OccupancySampleSet sample_supervision(const SdfShape& shape, std::size_t t,
                                             SupervisionRegime regime, RngStream stream) {
  require(t >= 1, "sample_supervision: need at least one sample");
  OccupancySampleSet set;
  set.q.reserve(t);
  if (regime == SupervisionRegime::Uniform) {
    for (std::size_t i = 0; i < t; ++i)
      set.q.push_back({uniform_in(stream, -0.5, 0.5), uniform_in(stream, -0.5, 0.5),
                       uniform_in(stream, -0.5, 0.5)});
  } else {
    std::size_t first_half = (t + 1) / 2;
    PointCloud surf = sample_surface(shape, t, 0.0, split(stream, "surface"));
    RngStream offs = split(stream, "offsets");
    for (std::size_t i = 0; i < t; ++i) {
      double sigma = i < first_half ? 0.01 : 0.05;
      auto g = gaussian(offs, 3, sigma);
      set.q.push_back(surf.points[i] + Vec3{g[0], g[1], g[2]});
    }
  }
  set.occ.resize(t);
  for (std::size_t i = 0; i < t; ++i) set.occ[i] = shape.inside(set.q[i]) ? 1 : 0;
  return set;
}

// ---- randomized shape generator ---------------------------------------------

namespace detail {

inline Vec3 place_center(RngStream& s, const Vec3& extent, const Vec3* near_to,
                         double near_radius) {
  Vec3 c;
  for (int axis = 0; axis < 3; ++axis) {
    double slack = std::max(0.0, 0.45 - extent[axis]);
    double lo = -slack, hi = slack;
    if (near_to) {
      lo = std::max(lo, (*near_to)[axis] - near_radius);
      hi = std::min(hi, (*near_to)[axis] + near_radius);
      if (lo > hi) lo = hi = std::clamp((*near_to)[axis], -slack, slack);
    }
    double v = uniform_in(s, lo, hi);
    if (axis == 0) c.x = v;
    if (axis == 1) c.y = v;
    if (axis == 2) c.z = v;
  }
  return c;
}

inline SdfPrimitive random_primitive(RngStream& s, bool primary, const Vec3* near_to) {
  SdfPrimitive p;
  double roll = s.next_double();
  if (roll < 1.0 / 3.0) {
    p.kind = SdfPrimitive::Kind::Sphere;
    p.radius = primary ? uniform_in(s, 0.26, 0.38) : uniform_in(s, 0.15, 0.24);
  } else if (roll < 2.0 / 3.0) {
    p.kind = SdfPrimitive::Kind::Box;
    auto he = [&](double lo, double hi) { return uniform_in(s, lo, hi); };
    p.half_extents = primary ? Vec3{he(0.22, 0.33), he(0.22, 0.33), he(0.22, 0.33)}
                             : Vec3{he(0.12, 0.20), he(0.12, 0.20), he(0.12, 0.20)};
  } else {
    p.kind = SdfPrimitive::Kind::Torus;
    if (primary) {
      p.major_radius = uniform_in(s, 0.22, 0.28);
      p.minor_radius = uniform_in(s, 0.13, 0.16);
    } else {
      p.major_radius = uniform_in(s, 0.14, 0.20);
      p.minor_radius = uniform_in(s, 0.08, 0.12);
    }
  }
  p.center = place_center(s, p.extent(), near_to, 0.25);
  return p;
}

}  // namespace detail

// Single primitives and unions of 2-3; the first part always comes from the
// larger ranges so the occupied volume fraction stays within [0.05, 0.6].
inline SdfShape make_random_shape(RngStream stream) {
  SdfShape shape;
  double roll = stream.next_double();
  std::size_t extra = roll < 0.6 ? 0 : (roll < 0.85 ? 1 : 2);
  shape.parts.push_back(detail::random_primitive(stream, /*primary=*/true, nullptr));
  Vec3 anchor = shape.parts[0].center;
  for (std::size_t i = 0; i < extra; ++i)
    shape.parts.push_back(detail::random_primitive(stream, /*primary=*/false, &anchor));
  return shape;
}

struct DatasetItem {
  PointCloud input;
  OccupancySampleSet supervision;
  SdfShape shape;
};

struct DatasetManifest {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  SupervisionRegime regime = SupervisionRegime::NearSurface;
  double noise_sigma = 0.0;
  std::size_t points = 300;
  std::size_t sup_points = 4096;
};

// Reproducible: item i depends only on (seed, i, parameters), so parallel and
// serial generation agree.
inline std::vector<DatasetItem> make_dataset(const DatasetManifest& cfg) {
  std::vector<DatasetItem> items(cfg.count);
  parallel_for(cfg.count, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      RngStream root(cfg.seed, fnv1a64("airnet-dataset"));
      RngStream s = split(split(root, "shape"), i);
      DatasetItem& item = items[i];
      item.shape = make_random_shape(split(s, "geometry"));
      item.input = sample_surface(item.shape, cfg.points, cfg.noise_sigma, split(s, "input"));
      item.supervision =
          sample_supervision(item.shape, cfg.sup_points, cfg.regime, split(s, "supervision"));
    }
  }, 1);
  return items;
}

// ---- on-disk layout ---------------------------------------------------------
//
// <dir>/manifest.json
// <dir>/shape_0000/input.xyz          point-cloud text format
// <dir>/shape_0000/supervision.bin    u32 T, T x 3 f32 coords, T u8 labels
// <dir>/shape_0000/shape.json         primitive parameters

inline nlohmann::json primitive_to_json(const SdfPrimitive& p) {
  nlohmann::json j;
  j["center"] = {p.center.x, p.center.y, p.center.z};
  j["scale"] = p.scale;
  switch (p.kind) {
    case SdfPrimitive::Kind::Sphere:
      j["kind"] = "sphere";
      j["radius"] = p.radius;
      break;
    case SdfPrimitive::Kind::Box:
      j["kind"] = "box";
      j["half_extents"] = {p.half_extents.x, p.half_extents.y, p.half_extents.z};
      break;
    case SdfPrimitive::Kind::Torus:
      j["kind"] = "torus";
      j["major_radius"] = p.major_radius;
      j["minor_radius"] = p.minor_radius;
      break;
  }
  return j;
}

inline SdfPrimitive primitive_from_json(const nlohmann::json& j) {
  SdfPrimitive p;
  auto c = j.at("center");
  p.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
  p.scale = j.at("scale").get<double>();
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "sphere") {
    p.kind = SdfPrimitive::Kind::Sphere;
    p.radius = j.at("radius").get<double>();
  } else if (kind == "box") {
    p.kind = SdfPrimitive::Kind::Box;
    auto he = j.at("half_extents");
    p.half_extents = {he.at(0).get<double>(), he.at(1).get<double>(), he.at(2).get<double>()};
  } else if (kind == "torus") {
    p.kind = SdfPrimitive::Kind::Torus;
    p.major_radius = j.at("major_radius").get<double>();
    p.minor_radius = j.at("minor_radius").get<double>();
  } else {
    throw IoError("shape.json: unknown primitive kind " + kind);
  }
  return p;
}

inline void save_shape_json(const std::string& path, const SdfShape& shape) {
  nlohmann::json j;
  j["parts"] = nlohmann::json::array();
  for (const auto& part : shape.parts) j["parts"].push_back(primitive_to_json(part));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_shape_json: cannot open " + path);
  out << j.dump(2) << '\n';
}

inline SdfShape load_shape_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_shape_json: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  SdfShape shape;
  for (const auto& part : j.at("parts")) shape.parts.push_back(primitive_from_json(part));
  require(!shape.parts.empty(), "shape.json: no parts");
  return shape;
}

inline void save_supervision(const std::string& path, const OccupancySampleSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_supervision: cannot open " + path);
  std::uint32_t t = static_cast<std::uint32_t>(set.size());
  out.write(reinterpret_cast<const char*>(&t), sizeof(t));
  for (const Vec3& p : set.q) {
    float row[3] = {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)};
    out.write(reinterpret_cast<const char*>(row), sizeof(row));
  }
  out.write(reinterpret_cast<const char*>(set.occ.data()),
            static_cast<std::streamsize>(set.occ.size()));
  if (!out) throw IoError("save_supervision: write failed for " + path);
}

inline OccupancySampleSet load_supervision(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_supervision: cannot open " + path);
  std::uint32_t t = 0;
  in.read(reinterpret_cast<char*>(&t), sizeof(t));
  OccupancySampleSet set;
  set.q.resize(t);
  set.occ.resize(t);
  for (std::uint32_t i = 0; i < t; ++i) {
    float row[3];
    in.read(reinterpret_cast<char*>(row), sizeof(row));
    set.q[i] = {row[0], row[1], row[2]};
  }
  in.read(reinterpret_cast<char*>(set.occ.data()), static_cast<std::streamsize>(t));
  if (!in) throw IoError("load_supervision: truncated file " + path);
  for (std::uint8_t o : set.occ)
    if (o > 1) throw IoError("load_supervision: labels must be 0/1 in " + path);
  return set;
}

inline std::string shape_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shape_%04zu", i);
  return buf;
}

inline void save_dataset(const std::string& dir, const std::vector<DatasetItem>& items,
                         const DatasetManifest& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["count"] = items.size();
  j["seed"] = cfg.seed;
  j["regime"] = cfg.regime == SupervisionRegime::NearSurface ? "near_surface" : "uniform";
  j["noise_sigma"] = cfg.noise_sigma;
  j["points"] = cfg.points;
  j["sup_points"] = cfg.sup_points;
  {
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw IoError("save_dataset: cannot open manifest in " + dir);
    out << j.dump(2) << '\n';
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::string sdir = dir + "/" + shape_dir_name(i);
    fs::create_directories(sdir);
    save_xyz(sdir + "/input.xyz", items[i].input);
    save_supervision(sdir + "/supervision.bin", items[i].supervision);
    save_shape_json(sdir + "/shape.json", items[i].shape);
  }
}

struct LoadedDataset {
  std::vector<DatasetItem> items;
  DatasetManifest manifest;
};

inline LoadedDataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw IoError("load_dataset: cannot open " + dir + "/manifest.json");
  nlohmann::json j = nlohmann::json::parse(in);
  LoadedDataset ds;
  ds.manifest.count = j.at("count").get<std::size_t>();
  ds.manifest.seed = j.at("seed").get<std::uint64_t>();
  ds.manifest.regime = j.at("regime").get<std::string>() == "uniform"
                           ? SupervisionRegime::Uniform
                           : SupervisionRegime::NearSurface;
  ds.manifest.noise_sigma = j.at("noise_sigma").get<double>();
  ds.manifest.points = j.at("points").get<std::size_t>();
  ds.manifest.sup_points = j.at("sup_points").get<std::size_t>();
  ds.items.resize(ds.manifest.count);
  for (std::size_t i = 0; i < ds.manifest.count; ++i) {
    std::string sdir = dir + "/" + shape_dir_name(i);
    ds.items[i].input = load_xyz(sdir + "/input.xyz");
    ds.items[i].supervision = load_supervision(sdir + "/supervision.bin");
    ds.items[i].shape = load_shape_json(sdir + "/shape.json");
  }
  return ds;
}

}  // namespace airnet

#endif
