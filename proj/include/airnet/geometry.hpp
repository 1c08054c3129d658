#ifndef AIRNET_GEOMETRY_HPP
#define AIRNET_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "airnet/common.hpp"

namespace airnet {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  return a.z < b.z;
}

// N x 3 coordinates with optional N x d0 features (row-major).
struct PointCloud {
  std::vector<Vec3> points;
  std::size_t feat_dim = 0;
  std::vector<double> features;

  std::size_t size() const { return points.size(); }

  void check() const {
    require(!points.empty(), "PointCloud: need at least one point");
    for (const Vec3& p : points)
      require(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z),
              "PointCloud: non-finite coordinate");
    require(features.size() == feat_dim * points.size(), "PointCloud: feature rows != N");
  }
};

// Per-query neighbor lists of fixed width k, sorted by ascending distance
// (ties by lower index).
struct Neighborhood {
  std::size_t k = 0;
  std::vector<int> idx;  // size = queries * k

  std::size_t queries() const { return k == 0 ? 0 : idx.size() / k; }
  const int* row(std::size_t q) const { return idx.data() + q * k; }
};

inline Vec3 centroid(const std::vector<Vec3>& pts) {
  Vec3 c;
  for (const Vec3& p : pts) c += p;
  return c * (1.0 / static_cast<double>(pts.size()));
}

// Deterministic farthest point sampling. The seed is the point farthest from
// the centroid; each following pick maximizes the min distance to the chosen
// set. Ties resolve by lexicographic coordinate order, then lowest index,
// which makes the selected SET permutation invariant.
inline std::vector<int> fps(const std::vector<Vec3>& pts, std::size_t n_out) {
  std::size_t n = pts.size();
  require(n >= 1, "fps: empty input");
  require(n_out >= 1 && n_out <= n, "fps: n' out of range");

  auto better = [&](std::size_t cand, double cand_d, std::size_t best, double best_d) {
    if (cand_d != best_d) return cand_d > best_d;
    if (!(pts[cand] == pts[best])) return lex_less(pts[cand], pts[best]);
    return cand < best;
  };

  Vec3 c = centroid(pts);
  std::size_t seed = 0;
  double seed_d = (pts[0] - c).norm2();
  for (std::size_t i = 1; i < n; ++i) {
    double d = (pts[i] - c).norm2();
    if (better(i, d, seed, seed_d)) {
      seed = i;
      seed_d = d;
    }
  }

  std::vector<int> picked;
  picked.reserve(n_out);
  picked.push_back(static_cast<int>(seed));
  std::vector<char> chosen(n, 0);
  chosen[seed] = 1;
  std::vector<double> min_d(n);
  for (std::size_t i = 0; i < n; ++i) min_d[i] = (pts[i] - pts[seed]).norm2();

  while (picked.size() < n_out) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      if (best == n || better(i, min_d[i], best, best_d)) {
        best = i;
        best_d = min_d[i];
      }
    }
    picked.push_back(static_cast<int>(best));
    chosen[best] = 1;
    for (std::size_t i = 0; i < n; ++i)
      min_d[i] = std::min(min_d[i], (pts[i] - pts[best]).norm2());
  }
  return picked;
}

// Exact k nearest neighbors by Euclidean distance, ties by lower index.
inline Neighborhood knn(const std::vector<Vec3>& queries, const std::vector<Vec3>& keys,
                        std::size_t k) {
  require(k >= 1 && k <= keys.size(), "knn: k out of range");
  Neighborhood nbh;
  nbh.k = k;
  nbh.idx.resize(queries.size() * k);
  std::vector<std::pair<double, int>> cand(keys.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t j = 0; j < keys.size(); ++j)
      cand[j] = {(keys[j] - queries[q]).norm2(), static_cast<int>(j)};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t j = 0; j < k; ++j) nbh.idx[q * k + j] = cand[j].second;
  }
  return nbh;
}

inline PointCloud centroid_center(const PointCloud& in) {
  PointCloud out = in;
  if (out.points.empty()) return out;
  Vec3 c = centroid(out.points);
  for (Vec3& p : out.points) p = p - c;
  return out;
}

// ---- file formats ----------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Text format: one point per line, "x y z [f1 ... fd0]".
inline void save_xyz(const std::string& path, const PointCloud& pc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_xyz: cannot open " + path);
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    out << detail::fmt_double(pc.points[i].x) << ' ' << detail::fmt_double(pc.points[i].y)
        << ' ' << detail::fmt_double(pc.points[i].z);
    for (std::size_t c = 0; c < pc.feat_dim; ++c)
      out << ' ' << detail::fmt_double(pc.features[i * pc.feat_dim + c]);
    out << '\n';
  }
  if (!out) throw IoError("save_xyz: write failed for " + path);
}

inline PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_xyz: cannot open " + path);
  PointCloud pc;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.empty()) continue;
    if (vals.size() < 3) throw IoError("load_xyz: short row in " + path);
    if (first) {
      pc.feat_dim = vals.size() - 3;
      first = false;
    } else if (vals.size() != 3 + pc.feat_dim) {
      throw IoError("load_xyz: inconsistent row width in " + path);
    }
    pc.points.push_back({vals[0], vals[1], vals[2]});
    for (std::size_t c = 3; c < vals.size(); ++c) pc.features.push_back(vals[c]);
  }
  pc.check();
  return pc;
}

constexpr std::uint32_t kXyzbMagic = 0x42524941u;  // "AIRB"

// Binary variant: header (magic, N, d0 as little-endian u32), then f32 rows.
inline void save_xyzb(const std::string& path, const PointCloud& pc) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_xyzb: cannot open " + path);
  std::uint32_t hdr[3] = {kXyzbMagic, static_cast<std::uint32_t>(pc.points.size()),
                          static_cast<std::uint32_t>(pc.feat_dim)};
  out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    float row[3] = {static_cast<float>(pc.points[i].x), static_cast<float>(pc.points[i].y),
                    static_cast<float>(pc.points[i].z)};
    out.write(reinterpret_cast<const char*>(row), sizeof(row));
    for (std::size_t c = 0; c < pc.feat_dim; ++c) {
      float f = static_cast<float>(pc.features[i * pc.feat_dim + c]);
      out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
  if (!out) throw IoError("save_xyzb: write failed for " + path);
}

inline PointCloud load_xyzb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_xyzb: cannot open " + path);
  std::uint32_t hdr[3];
  in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!in || hdr[0] != kXyzbMagic) throw IoError("load_xyzb: bad header in " + path);
  PointCloud pc;
  pc.feat_dim = hdr[2];
  pc.points.resize(hdr[1]);
  pc.features.resize(static_cast<std::size_t>(hdr[1]) * hdr[2]);
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    float row[3];
    in.read(reinterpret_cast<char*>(row), sizeof(row));
    pc.points[i] = {row[0], row[1], row[2]};
    for (std::size_t c = 0; c < pc.feat_dim; ++c) {
      float f;
      in.read(reinterpret_cast<char*>(&f), sizeof(f));
      pc.features[i * pc.feat_dim + c] = f;
    }
  }
  if (!in) throw IoError("load_xyzb: truncated file " + path);
  pc.check();
  return pc;
}

}  // namespace airnet

#endif
