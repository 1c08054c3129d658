#ifndef AIRNET_EXTRACTION_HPP
#define AIRNET_EXTRACTION_HPP

#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <unordered_map>
#include <vector>

#include "airnet/mc_tables.hpp"
#include "airnet/model.hpp"

namespace airnet {

// Evaluates occupancy for a batch of query points; out has the same length.
using OccBatchFn = std::function<std::vector<double>(const std::vector<Vec3>&)>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  Vec3 face_normal(std::size_t f) const {
    const auto& t = triangles[f];
    Vec3 a = vertices[static_cast<std::size_t>(t[0])];
    Vec3 b = vertices[static_cast<std::size_t>(t[1])];
    Vec3 c = vertices[static_cast<std::size_t>(t[2])];
    return (b - a).cross(c - a);  // length = 2 * area
  }
};

// Vertex lattice of (res+1)^3 occupancy values over an axis-aligned box.
// `evaluated` distinguishes queried vertices from values propagated out of
// uniform regions.
struct OccupancyGrid {
  std::size_t res = 0;  // cells per axis
  Vec3 origin, size;
  std::vector<double> values;
  std::vector<std::uint8_t> evaluated;
  std::size_t eval_count = 0;

  std::size_t stride() const { return res + 1; }
  std::size_t idx(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * stride() + j) * stride() + k;
  }
  Vec3 vertex(std::size_t i, std::size_t j, std::size_t k) const {
    double r = static_cast<double>(res);
    return {origin.x + size.x * static_cast<double>(i) / r,
            origin.y + size.y * static_cast<double>(j) / r,
            origin.z + size.z * static_cast<double>(k) / r};
  }

  // a cell straddles tau when its corners do not share one side
  bool cell_straddles(std::size_t i, std::size_t j, std::size_t k, double tau) const {
    bool first = values[idx(i, j, k)] < tau;
    for (int c = 1; c < 8; ++c) {
      bool side = values[idx(i + ((c & 1) ? 1 : 0), j + ((c & 2) ? 1 : 0),
                             k + ((c & 4) ? 1 : 0))] < tau;
      if (side != first) return true;
    }
    return false;
  }
};

namespace detail {

inline void eval_grid_points(OccupancyGrid& grid, const OccBatchFn& occ,
                             const std::vector<std::size_t>& flat_indices) {
  if (flat_indices.empty()) return;
  std::vector<Vec3> pts;
  pts.reserve(flat_indices.size());
  std::size_t s = grid.stride();
  for (std::size_t f : flat_indices) {
    std::size_t i = f / (s * s), j = (f / s) % s, k = f % s;
    pts.push_back(grid.vertex(i, j, k));
  }
  std::vector<double> vals = occ(pts);
  require(vals.size() == pts.size(), "occupancy function returned wrong batch size");
  for (std::size_t n = 0; n < flat_indices.size(); ++n) {
    if (!std::isfinite(vals[n]))
      throw NumericError("occupancy function returned a non-finite value");
    grid.values[flat_indices[n]] = vals[n];
    grid.evaluated[flat_indices[n]] = 1;
  }
  grid.eval_count += flat_indices.size();
}

}  // namespace detail

// Dense evaluation at full resolution; the reference route for MISE.
inline OccupancyGrid dense_grid(const OccBatchFn& occ, const Vec3& origin, const Vec3& size,
                                std::size_t res) {
  OccupancyGrid grid;
  grid.res = res;
  grid.origin = origin;
  grid.size = size;
  grid.values.assign(grid.stride() * grid.stride() * grid.stride(), 0.0);
  grid.evaluated.assign(grid.values.size(), 0);
  std::vector<std::size_t> all(grid.values.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  detail::eval_grid_points(grid, occ, all);
  return grid;
}

// Multiresolution isosurface extraction: evaluate a coarse lattice, then
// repeatedly subdivide only the cells whose corners straddle tau, evaluating
// just the new vertices. Vertices inside uniform regions inherit their
// region's value, so the final straddle pattern matches a dense evaluation
// whenever the coarse lattice resolves every sign structure.
inline OccupancyGrid mise(const OccBatchFn& occ, const Vec3& origin, const Vec3& size,
                          std::size_t r0, std::size_t upsample, double tau) {
  require(r0 >= 8, "mise: initial resolution must be at least 8");
  require(tau > 0.0 && tau < 1.0, "mise: tau must lie in (0,1)");
  OccupancyGrid grid;
  grid.res = r0 << upsample;
  grid.origin = origin;
  grid.size = size;
  grid.values.assign(grid.stride() * grid.stride() * grid.stride(), 0.0);
  grid.evaluated.assign(grid.values.size(), 0);

  std::size_t step = std::size_t{1} << upsample;

  // level 0: full coarse lattice
  {
    std::vector<std::size_t> pts;
    for (std::size_t i = 0; i <= grid.res; i += step)
      for (std::size_t j = 0; j <= grid.res; j += step)
        for (std::size_t k = 0; k <= grid.res; k += step) pts.push_back(grid.idx(i, j, k));
    detail::eval_grid_points(grid, occ, pts);
  }

  auto straddles = [&](std::size_t i, std::size_t j, std::size_t k, std::size_t s) {
    bool first = grid.values[grid.idx(i, j, k)] < tau;
    for (int c = 1; c < 8; ++c) {
      bool side = grid.values[grid.idx(i + ((c & 1) ? s : 0), j + ((c & 2) ? s : 0),
                                       k + ((c & 4) ? s : 0))] < tau;
      if (side != first) return true;
    }
    return false;
  };

  std::vector<std::array<std::size_t, 3>> active;
  for (std::size_t i = 0; i < grid.res; i += step)
    for (std::size_t j = 0; j < grid.res; j += step)
      for (std::size_t k = 0; k < grid.res; k += step)
        if (straddles(i, j, k, step)) active.push_back({i, j, k});

  for (std::size_t s = step; s > 1; s /= 2) {
    std::size_t h = s / 2;
    // evaluate the refinement vertices of all active cells
    std::vector<std::size_t> pts;
    for (const auto& cell : active) {
      for (std::size_t di = 0; di <= 2; ++di)
        for (std::size_t dj = 0; dj <= 2; ++dj)
          for (std::size_t dk = 0; dk <= 2; ++dk) {
            std::size_t f = grid.idx(cell[0] + di * h, cell[1] + dj * h, cell[2] + dk * h);
            if (!grid.evaluated[f]) {
              grid.evaluated[f] = 2;  // queued
              pts.push_back(f);
            }
          }
    }
    for (std::size_t f : pts) grid.evaluated[f] = 0;
    detail::eval_grid_points(grid, occ, pts);

    std::vector<std::array<std::size_t, 3>> next;
    for (const auto& cell : active)
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj)
          for (std::size_t dk = 0; dk < 2; ++dk) {
            std::size_t i = cell[0] + di * h, j = cell[1] + dj * h, k = cell[2] + dk * h;
            if (straddles(i, j, k, h)) next.push_back({i, j, k});
          }
    active.swap(next);
  }

  // propagate uniform-region values level by level; an unevaluated vertex
  // copies from the min corner of its enclosing (inactive, hence uniform) cell
  std::vector<std::uint8_t> filled = grid.evaluated;
  for (std::size_t s = step; s > 1; s /= 2) {
    std::size_t h = s / 2;
    for (std::size_t i = 0; i <= grid.res; i += h)
      for (std::size_t j = 0; j <= grid.res; j += h)
        for (std::size_t k = 0; k <= grid.res; k += h) {
          std::size_t f = grid.idx(i, j, k);
          if (filled[f]) continue;
          grid.values[f] = grid.values[grid.idx(i - (i % s), j - (j % s), k - (k % s))];
          filled[f] = 1;
        }
  }
  return grid;
}

// Standard 256-case marching cubes with linear interpolation along straddling
// edges and welded vertices (each lattice edge owns at most one vertex).
// Winding is chosen so normals point away from the occupied side.
inline TriangleMesh marching_cubes(const OccupancyGrid& grid, double tau) {
  require(grid.res >= 1 && !grid.values.empty(), "marching_cubes: empty grid");
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;

  // cell-corner offsets in table order
  static const int off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  // edge -> (corner a, corner b)
  static const int edge_corners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                          {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                          {0, 4}, {1, 5}, {2, 6}, {3, 7}};

  auto edge_key = [&](std::size_t i, std::size_t j, std::size_t k, int ca, int cb) {
    std::size_t ai = i + static_cast<std::size_t>(off[ca][0]);
    std::size_t aj = j + static_cast<std::size_t>(off[ca][1]);
    std::size_t ak = k + static_cast<std::size_t>(off[ca][2]);
    std::size_t bi = i + static_cast<std::size_t>(off[cb][0]);
    std::size_t bj = j + static_cast<std::size_t>(off[cb][1]);
    std::size_t bk = k + static_cast<std::size_t>(off[cb][2]);
    int axis = bi != ai ? 0 : (bj != aj ? 1 : 2);
    std::size_t mi = std::min(ai, bi), mj = std::min(aj, bj), mk = std::min(ak, bk);
    return (static_cast<std::uint64_t>(grid.idx(mi, mj, mk)) << 2) |
           static_cast<std::uint64_t>(axis);
  };

  for (std::size_t i = 0; i < grid.res; ++i)
    for (std::size_t j = 0; j < grid.res; ++j)
      for (std::size_t k = 0; k < grid.res; ++k) {
        double v[8];
        for (int c = 0; c < 8; ++c)
          v[c] = grid.values[grid.idx(i + static_cast<std::size_t>(off[c][0]),
                                      j + static_cast<std::size_t>(off[c][1]),
                                      k + static_cast<std::size_t>(off[c][2]))];
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (v[c] < tau) cube |= 1 << c;
        int edges = detail::kMcEdgeTable[cube];
        if (edges == 0) continue;

        int everts[12];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          std::uint64_t key = edge_key(i, j, k, edge_corners[e][0], edge_corners[e][1]);
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) {
            everts[e] = it->second;
            continue;
          }
          int ca = edge_corners[e][0], cb = edge_corners[e][1];
          Vec3 pa = grid.vertex(i + static_cast<std::size_t>(off[ca][0]),
                                j + static_cast<std::size_t>(off[ca][1]),
                                k + static_cast<std::size_t>(off[ca][2]));
          Vec3 pb = grid.vertex(i + static_cast<std::size_t>(off[cb][0]),
                                j + static_cast<std::size_t>(off[cb][1]),
                                k + static_cast<std::size_t>(off[cb][2]));
          double t = (tau - v[ca]) / (v[cb] - v[ca]);
          Vec3 p = pa + (pb - pa) * t;
          everts[e] = static_cast<int>(mesh.vertices.size());
          mesh.vertices.push_back(p);
          edge_vertex.emplace(key, everts[e]);
        }

        const int* tri = detail::kMcTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          int a = everts[tri[t]], b = everts[tri[t + 1]], c = everts[tri[t + 2]];
          if (a == b || b == c || a == c) continue;  // degenerate (tau hit a corner)
          mesh.triangles.push_back({a, b, c});
        }
      }
  return mesh;
}

// Every undirected edge shared by exactly two triangles.
inline bool is_watertight(const TriangleMesh& mesh) {
  if (mesh.empty()) return false;
  std::unordered_map<std::uint64_t, int> edge_count;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      std::uint64_t a = static_cast<std::uint64_t>(std::min(t[e], t[(e + 1) % 3]));
      std::uint64_t b = static_cast<std::uint64_t>(std::max(t[e], t[(e + 1) % 3]));
      edge_count[(a << 32) | b] += 1;
    }
  for (const auto& [key, n] : edge_count)
    if (n != 2) return false;
  return true;
}

// Grid bounding box: the input's AABB inflated by 0.1 per side, with each
// half-extent capped at 0.5 (unit-cube-sized) around the AABB center.
inline void reconstruction_bbox(const std::vector<Vec3>& points, Vec3& origin, Vec3& size) {
  Vec3 lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  Vec3 center = (lo + hi) * 0.5;
  Vec3 half{std::min((hi.x - lo.x) * 0.5 + 0.1, 0.5), std::min((hi.y - lo.y) * 0.5 + 0.1, 0.5),
            std::min((hi.z - lo.z) * 0.5 + 0.1, 0.5)};
  origin = center - half;
  size = half * 2.0;
}

template <typename T>
inline OccBatchFn make_occupancy_fn(const ShapeEncoding<T>& enc, const DecoderParams<T>& dec,
                                    const DecoderConfig& cfg) {
  return [&enc, &dec, &cfg](const std::vector<Vec3>& pts) {
    return decode_batch<T>(pts, enc, dec, cfg);
  };
}

// Encode once, refine the occupancy grid with MISE, run marching cubes.
template <typename T>
inline TriangleMesh reconstruct(AirNet<T>& model, const PointCloud& cloud, std::size_t r0,
                                std::size_t upsample, double tau) {
  ShapeEncoding<T> enc = encode(cloud, model.enc, model.enc_cfg, Mode::Eval);
  Vec3 origin, size;
  reconstruction_bbox(cloud.points, origin, size);
  OccBatchFn occ = make_occupancy_fn<T>(enc, model.dec, model.dec_cfg);
  OccupancyGrid grid = mise(occ, origin, size, r0, upsample, tau);
  return marching_cubes(grid, tau);
}

// ---- Wavefront OBJ ----------------------------------------------------------

inline void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_obj: cannot open " + path);
  for (const Vec3& v : mesh.vertices)
    out << "v " << detail::fmt_double(v.x) << ' ' << detail::fmt_double(v.y) << ' '
        << detail::fmt_double(v.z) << '\n';
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("save_obj: write failed for " + path);
}

inline TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_obj: cannot open " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) {
      Vec3 v;
      if (std::sscanf(line.c_str(), "v %lf %lf %lf", &v.x, &v.y, &v.z) != 3)
        throw IoError("load_obj: bad vertex line in " + path);
      mesh.vertices.push_back(v);
    } else if (line.rfind("f ", 0) == 0) {
      std::vector<int> ids;
      const char* p = line.c_str() + 2;
      while (*p) {
        while (*p == ' ') ++p;
        if (!*p) break;
        int v = std::atoi(p);
        if (v == 0) throw IoError("load_obj: bad face line in " + path);
        ids.push_back(v > 0 ? v - 1 : static_cast<int>(mesh.vertices.size()) + v);
        while (*p && *p != ' ') ++p;  // skips any /vt/vn suffix
      }
      if (ids.size() < 3) throw IoError("load_obj: face with fewer than 3 vertices in " + path);
      for (std::size_t t = 1; t + 1 < ids.size(); ++t)
        mesh.triangles.push_back({ids[0], ids[t], ids[t + 1]});
    }
  }
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e)
      require(t[e] >= 0 && t[e] < static_cast<int>(mesh.vertices.size()),
              "load_obj: face index out of range in " + path);
  return mesh;
}

}  // namespace airnet

#endif
