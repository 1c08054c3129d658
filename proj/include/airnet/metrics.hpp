#ifndef AIRNET_METRICS_HPP
#define AIRNET_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "airnet/extraction.hpp"
#include "airnet/rng.hpp"
#include "airnet/synthdata.hpp"

namespace airnet {

// Binary membership oracle over query batches.
using OccIndicator = std::function<std::vector<char>(const std::vector<Vec3>&)>;

inline OccIndicator indicator_from_occupancy(OccBatchFn occ, double tau) {
  return [occ = std::move(occ), tau](const std::vector<Vec3>& pts) {
    std::vector<double> p = occ(pts);
    std::vector<char> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= tau ? 1 : 0;
    return out;
  };
}

inline OccIndicator indicator_from_shape(const SdfShape& shape) {
  return [shape](const std::vector<Vec3>& pts) {
    std::vector<char> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = shape.inside(pts[i]) ? 1 : 0;
    return out;
  };
}

// Point-in-mesh test by ray-crossing parity. Triangles are bucketed on a
// (y,z) grid; the ray direction is +x with a fixed tiny tilt so that exact
// edge hits do not occur for lattice-aligned meshes.
class MeshOccupancy {
 public:
  explicit MeshOccupancy(const TriangleMesh& mesh) : mesh_(mesh) {
    require(!mesh.empty(), "MeshOccupancy: empty mesh");
    lo_ = hi_ = mesh.vertices[0];
    for (const Vec3& v : mesh.vertices) {
      lo_ = {std::min(lo_.x, v.x), std::min(lo_.y, v.y), std::min(lo_.z, v.z)};
      hi_ = {std::max(hi_.x, v.x), std::max(hi_.y, v.y), std::max(hi_.z, v.z)};
    }
    double span_y = std::max(hi_.y - lo_.y, 1e-9), span_z = std::max(hi_.z - lo_.z, 1e-9);
    buckets_.assign(kGrid * kGrid, {});
    const double margin = 1e-3;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      double ylo = 1e30, yhi = -1e30, zlo = 1e30, zhi = -1e30;
      for (int e = 0; e < 3; ++e) {
        const Vec3& v = mesh.vertices[static_cast<std::size_t>(mesh.triangles[t][e])];
        ylo = std::min(ylo, v.y); yhi = std::max(yhi, v.y);
        zlo = std::min(zlo, v.z); zhi = std::max(zhi, v.z);
      }
      int j0 = cell((ylo - margin - lo_.y) / span_y), j1 = cell((yhi + margin - lo_.y) / span_y);
      int k0 = cell((zlo - margin - lo_.z) / span_z), k1 = cell((zhi + margin - lo_.z) / span_z);
      for (int j = j0; j <= j1; ++j)
        for (int k = k0; k <= k1; ++k)
          buckets_[static_cast<std::size_t>(j * kGrid + k)].push_back(static_cast<int>(t));
    }
    span_y_ = span_y;
    span_z_ = span_z;
  }

  bool inside(const Vec3& p) const {
    if (p.x < lo_.x - 1e-9 || p.y < lo_.y - 1e-9 || p.z < lo_.z - 1e-9 || p.x > hi_.x + 1e-9 ||
        p.y > hi_.y + 1e-9 || p.z > hi_.z + 1e-9)
      return false;
    static const Vec3 dir{1.0, 3.1e-5, 7.7e-5};
    int j = cell((p.y - lo_.y) / span_y_), k = cell((p.z - lo_.z) / span_z_);
    int crossings = 0;
    for (int t : buckets_[static_cast<std::size_t>(j * kGrid + k)])
      if (ray_hits(p, dir, static_cast<std::size_t>(t))) ++crossings;
    return crossings % 2 == 1;
  }

  OccIndicator indicator() const {
    return [this](const std::vector<Vec3>& pts) {
      std::vector<char> out(pts.size());
      parallel_for(pts.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) out[i] = inside(pts[i]) ? 1 : 0;
      });
      return out;
    };
  }

 private:
  static constexpr int kGrid = 64;

  static int cell(double frac) {
    int c = static_cast<int>(frac * kGrid);
    return std::clamp(c, 0, kGrid - 1);
  }

  bool ray_hits(const Vec3& origin, const Vec3& dir, std::size_t t) const {
    const auto& tri = mesh_.triangles[t];
    Vec3 a = mesh_.vertices[static_cast<std::size_t>(tri[0])];
    Vec3 b = mesh_.vertices[static_cast<std::size_t>(tri[1])];
    Vec3 c = mesh_.vertices[static_cast<std::size_t>(tri[2])];
    Vec3 e1 = b - a, e2 = c - a;
    Vec3 pv = dir.cross(e2);
    double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return false;
    double inv = 1.0 / det;
    Vec3 tv = origin - a;
    double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    Vec3 qv = tv.cross(e1);
    double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    double dist = e2.dot(qv) * inv;
    return dist > 1e-12;
  }

  const TriangleMesh& mesh_;
  Vec3 lo_, hi_;
  double span_y_ = 1, span_z_ = 1;
  std::vector<std::vector<int>> buckets_;
};

inline std::uint64_t mesh_hash(const TriangleMesh& mesh) {
  std::uint64_t h = fnv1a64(mesh.vertices.data(), mesh.vertices.size() * sizeof(Vec3));
  return fnv1a64(mesh.triangles.data(), mesh.triangles.size() * sizeof(mesh.triangles[0]), h);
}

struct SurfaceSample {
  Vec3 p;
  Vec3 n;  // unit face normal
};

// Area-uniform samples with their face normals.
inline std::vector<SurfaceSample> sample_mesh(const TriangleMesh& mesh, std::size_t n,
                                              RngStream stream) {
  require(!mesh.empty(), "sample_mesh: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += 0.5 * mesh.face_normal(t).norm();
    cum[t] = total;
  }
  require(total > 0, "sample_mesh: degenerate mesh");
  std::vector<SurfaceSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pick = uniform_in(stream, 0.0, total);
    std::size_t t = static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    if (t >= mesh.triangles.size()) t = mesh.triangles.size() - 1;
    const auto& tri = mesh.triangles[t];
    Vec3 a = mesh.vertices[static_cast<std::size_t>(tri[0])];
    Vec3 b = mesh.vertices[static_cast<std::size_t>(tri[1])];
    Vec3 c = mesh.vertices[static_cast<std::size_t>(tri[2])];
    double su = std::sqrt(stream.next_double());
    double v = stream.next_double();
    double wa = 1.0 - su, wb = su * (1.0 - v), wc = su * v;
    Vec3 nrm = mesh.face_normal(t);
    double len = nrm.norm();
    out[i].p = a * wa + b * wb + c * wc;
    out[i].n = len > 0 ? nrm * (1.0 / len) : Vec3{0, 0, 1};
  }
  return out;
}

namespace detail {

// exact nearest neighbor between sample sets, brute force
inline std::vector<int> nearest_indices(const std::vector<SurfaceSample>& from,
                                        const std::vector<SurfaceSample>& to) {
  std::vector<int> nn(from.size());
  parallel_for(from.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      double best = 1e30;
      int arg = 0;
      for (std::size_t j = 0; j < to.size(); ++j) {
        double d = (from[i].p - to[j].p).norm2();
        if (d < best) {
          best = d;
          arg = static_cast<int>(j);
        }
      }
      nn[i] = arg;
    }
  }, 64);
  return nn;
}

inline RngStream metric_stream(std::uint64_t seed, const char* label) {
  // Both meshes of one comparison are sampled from the SAME uniform sequence:
  // identical meshes then get identical samples (self-comparisons are exact),
  // the metrics are symmetric, and rigid translations of both inputs leave
  // the sample geometry unchanged up to rounding.
  return split(RngStream(seed, fnv1a64("airnet-metrics")), label);
}

}  // namespace detail

// Monte-Carlo volumetric IoU over the unit cube; 1.0 when both sets are
// empty on every sample. Standard error at n samples is at most 0.5/sqrt(n).
inline double iou(const OccIndicator& pred, const OccIndicator& gt, std::size_t n_samples,
                  std::uint64_t seed) {
  require(n_samples >= 1, "iou: need at least one sample");
  RngStream s(seed, fnv1a64("airnet-iou"));
  std::vector<Vec3> pts(n_samples);
  for (auto& p : pts)
    p = {uniform_in(s, -0.5, 0.5), uniform_in(s, -0.5, 0.5), uniform_in(s, -0.5, 0.5)};
  std::vector<char> a = pred(pts), b = gt(pts);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// L1 Chamfer distance: mean nearest-neighbor distance in both directions,
// halved (accuracy + completeness) / 2.
inline double chamfer_l1(const TriangleMesh& mesh_a, const TriangleMesh& mesh_b,
                         std::size_t n_samples, std::uint64_t seed) {
  require(!mesh_a.empty() && !mesh_b.empty(), "chamfer_l1: empty mesh");
  RngStream stream = detail::metric_stream(seed, "chamfer");
  auto sa = sample_mesh(mesh_a, n_samples, stream);
  auto sb = sample_mesh(mesh_b, n_samples, stream);
  auto ab = detail::nearest_indices(sa, sb);
  auto ba = detail::nearest_indices(sb, sa);
  double acc = 0, comp = 0;
  for (std::size_t i = 0; i < sa.size(); ++i)
    acc += (sa[i].p - sb[static_cast<std::size_t>(ab[i])].p).norm();
  for (std::size_t i = 0; i < sb.size(); ++i)
    comp += (sb[i].p - sa[static_cast<std::size_t>(ba[i])].p).norm();
  return 0.5 * (acc / static_cast<double>(sa.size()) + comp / static_cast<double>(sb.size()));
}

// Mean absolute cosine between face normals at samples and at their nearest
// neighbors on the other mesh, both directions.
inline double normal_consistency(const TriangleMesh& mesh_a, const TriangleMesh& mesh_b,
                                 std::size_t n_samples, std::uint64_t seed) {
  require(!mesh_a.empty() && !mesh_b.empty(), "normal_consistency: empty mesh");
  RngStream stream = detail::metric_stream(seed, "normals");
  auto sa = sample_mesh(mesh_a, n_samples, stream);
  auto sb = sample_mesh(mesh_b, n_samples, stream);
  auto ab = detail::nearest_indices(sa, sb);
  auto ba = detail::nearest_indices(sb, sa);
  double da = 0, db = 0;
  for (std::size_t i = 0; i < sa.size(); ++i)
    da += std::abs(sa[i].n.dot(sb[static_cast<std::size_t>(ab[i])].n));
  for (std::size_t i = 0; i < sb.size(); ++i)
    db += std::abs(sb[i].n.dot(sa[static_cast<std::size_t>(ba[i])].n));
  return 0.5 * (da / static_cast<double>(sa.size()) + db / static_cast<double>(sb.size()));
}

// Harmonic mean of precision and recall at threshold tau_f; 0 when both are 0.
inline double f_score(const TriangleMesh& mesh_a, const TriangleMesh& mesh_b, double tau_f,
                      std::size_t n_samples, std::uint64_t seed) {
  require(!mesh_a.empty() && !mesh_b.empty(), "f_score: empty mesh");
  RngStream stream = detail::metric_stream(seed, "fscore");
  auto sa = sample_mesh(mesh_a, n_samples, stream);
  auto sb = sample_mesh(mesh_b, n_samples, stream);
  auto ab = detail::nearest_indices(sa, sb);
  auto ba = detail::nearest_indices(sb, sa);
  double precision = 0, recall = 0;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if ((sa[i].p - sb[static_cast<std::size_t>(ab[i])].p).norm() <= tau_f) precision += 1;
  for (std::size_t i = 0; i < sb.size(); ++i)
    if ((sb[i].p - sa[static_cast<std::size_t>(ba[i])].p).norm() <= tau_f) recall += 1;
  precision /= static_cast<double>(sa.size());
  recall /= static_cast<double>(sb.size());
  if (precision + recall == 0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

struct EvalReport {
  double iou = 0, chamfer_l1 = 0, normal_consistency = 0, f_score = 0;
  std::size_t iou_samples = 0, surface_samples = 0;
  std::uint64_t seed = 0;
};

inline EvalReport mean_report(const std::vector<EvalReport>& rows) {
  EvalReport m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.iou += r.iou;
    m.chamfer_l1 += r.chamfer_l1;
    m.normal_consistency += r.normal_consistency;
    m.f_score += r.f_score;
  }
  double n = static_cast<double>(rows.size());
  m.iou /= n;
  m.chamfer_l1 /= n;
  m.normal_consistency /= n;
  m.f_score /= n;
  m.iou_samples = rows[0].iou_samples;
  m.surface_samples = rows[0].surface_samples;
  m.seed = rows[0].seed;
  return m;
}

// Table in the usual IoU^ / L1-CD v / NC^ / F-Score^ layout plus a
// machine-readable key=value block.
inline void write_eval_report(const std::string& txt_path, const std::string& kv_path,
                              const std::vector<std::string>& names,
                              const std::vector<EvalReport>& rows) {
  require(names.size() == rows.size(), "write_eval_report: name/row mismatch");
  EvalReport mean = mean_report(rows);
  {
    std::ofstream out(txt_path, std::ios::binary);
    if (!out) throw IoError("write_eval_report: cannot open " + txt_path);
    char line[256];
    out << "shape                    IoU^     L1-CD v   NC^      F-Score^\n";
    auto row = [&](const std::string& name, const EvalReport& r) {
      std::snprintf(line, sizeof(line), "%-22s %8.4f  %8.5f  %7.4f  %8.4f\n", name.c_str(),
                    r.iou, r.chamfer_l1, r.normal_consistency, r.f_score);
      out << line;
    };
    for (std::size_t i = 0; i < rows.size(); ++i) row(names[i], rows[i]);
    row("mean", mean);
    std::snprintf(line, sizeof(line),
                  "# iou_samples=%zu surface_samples=%zu seed=%llu iou_mc_stderr_bound=%.6f\n",
                  mean.iou_samples, mean.surface_samples,
                  static_cast<unsigned long long>(mean.seed),
                  0.5 / std::sqrt(static_cast<double>(std::max<std::size_t>(mean.iou_samples, 1))));
    out << line;
  }
  {
    std::ofstream out(kv_path, std::ios::binary);
    if (!out) throw IoError("write_eval_report: cannot open " + kv_path);
    auto kv = [&](const std::string& prefix, const EvalReport& r) {
      out << prefix << ".iou=" << detail::fmt_double(r.iou) << '\n';
      out << prefix << ".chamfer_l1=" << detail::fmt_double(r.chamfer_l1) << '\n';
      out << prefix << ".normal_consistency=" << detail::fmt_double(r.normal_consistency) << '\n';
      out << prefix << ".f_score=" << detail::fmt_double(r.f_score) << '\n';
    };
    for (std::size_t i = 0; i < rows.size(); ++i) kv(names[i], rows[i]);
    kv("mean", mean);
    out << "iou_samples=" << mean.iou_samples << '\n';
    out << "surface_samples=" << mean.surface_samples << '\n';
    out << "seed=" << mean.seed << '\n';
    out << "iou_mc_stderr_bound="
        << detail::fmt_double(0.5 / std::sqrt(static_cast<double>(
               std::max<std::size_t>(mean.iou_samples, 1))))
        << '\n';
  }
}

}  // namespace airnet

#endif
