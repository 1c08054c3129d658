#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "airnet/attention.hpp"
#include "test_util.hpp"

using namespace airnet;
using testutil::fd_gradient;
using testutil::max_rel_err;

namespace {

std::vector<Vec3> random_cloud(RngStream& s, std::size_t n) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts)
    p = {uniform_in(s, -0.5, 0.5), uniform_in(s, -0.5, 0.5), uniform_in(s, -0.5, 0.5)};
  return pts;
}

// Straight-line evaluation of the attention equations with plain loops; kept
// deliberately independent of the tensor ops.
struct ScriptedVca {
  std::size_t d;
  const VcaParams<double>& p;

  std::vector<double> mat_vec(const Tensor<double>& w, const std::vector<double>& x) const {
    std::size_t rows = w.shape[0], cols = w.shape[1];
    std::vector<double> out(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[j] += x[i] * w.vec()[i * cols + j];
    return out;
  }

  std::vector<double> mlp(const Mlp<double>& m, std::vector<double> x) const {
    for (const auto& layer : m.layers) {
      auto h = mat_vec(layer.w, x);
      for (std::size_t j = 0; j < h.size(); ++j) h[j] += layer.b.vec()[j];
      if (layer.relu_after)
        for (auto& v : h) v = v > 0 ? v : 0;
      x = std::move(h);
    }
    return x;
  }

  // one query row against its neighbor list
  std::vector<double> query(const Vec3& pq, const std::vector<double>& xq,
                            const std::vector<Vec3>& pkv,
                            const std::vector<std::vector<double>>& xkv,
                            const std::vector<int>& nbrs) const {
    std::size_t k = nbrs.size();
    std::vector<std::vector<double>> scores(k), values(k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto kv = static_cast<std::size_t>(nbrs[j]);
      Vec3 rel = pq - pkv[kv];
      auto dlt = mlp(p.delta, {rel.x, rel.y, rel.z});
      std::vector<double> sin(d), val(d);
      if (p.feature_free) {
        sin = dlt;
        val = dlt;
      } else {
        auto fq = mat_vec(p.w_q, xq);
        auto fk = mat_vec(p.w_k, xkv[kv]);
        auto fv = mat_vec(p.w_v, xkv[kv]);
        for (std::size_t c = 0; c < d; ++c) {
          sin[c] = fq[c] - fk[c] + dlt[c];
          val[c] = fv[c] + dlt[c];
        }
      }
      scores[j] = mlp(p.gamma, sin);
      values[j] = val;
    }
    std::vector<double> out(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
      double m = scores[0][c];
      for (std::size_t j = 1; j < k; ++j) m = std::max(m, scores[j][c]);
      double z = 0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(scores[j][c] - m);
      for (std::size_t j = 0; j < k; ++j)
        out[c] += std::exp(scores[j][c] - m) / z * values[j][c];
    }
    return out;
  }
};

}  // namespace

TEST_CASE("vca single-neighbor collapses to the value term", "[attention]") {
  RngStream s(1, 0);
  std::size_t d = 4;
  auto params = VcaParams<double>::make(d, d, d);
  params.init(split(s, "p"));

  std::vector<Vec3> pq = {{0.1, 0.2, 0.3}};
  std::vector<Vec3> pkv = {{0.0, 0.1, 0.2}};
  auto xq = Tensor<double>::from({1, d}, testutil::random_vec(s, d));
  auto xkv = Tensor<double>::from({1, d}, testutil::random_vec(s, d));
  Neighborhood nbh;
  nbh.k = 1;
  nbh.idx = {0};

  auto out = vca(pq, xq, pkv, xkv, nbh, params);

  // with k=1 softmax weights are all one, so the output is exactly V_{i,self}
  ScriptedVca oracle{d, params};
  Vec3 rel = pq[0] - pkv[0];
  auto dlt = oracle.mlp(params.delta, {rel.x, rel.y, rel.z});
  std::vector<double> xkv_row(xkv.vec());
  auto fv = oracle.mat_vec(params.w_v, xkv_row);
  for (std::size_t c = 0; c < d; ++c)
    REQUIRE(out.vec()[c] == Catch::Approx(fv[c] + dlt[c]).margin(1e-12));
}

TEST_CASE("feature-free colocated query yields delta(0) for every query", "[attention]") {
  RngStream s(2, 0);
  std::size_t d = 5;
  auto params = VcaParams<double>::make_feature_free(d);
  params.init(split(s, "p"));

  std::vector<Vec3> pts = {{0.3, -0.2, 0.1}, {-0.4, 0.0, 0.25}};
  Neighborhood nbh;
  nbh.k = 1;
  nbh.idx = {0, 1};  // each query attends to the key at its own location

  Tensor<double> none;
  auto out = vca(pts, none, pts, none, nbh, params);

  ScriptedVca oracle{d, params};
  auto expect = oracle.mlp(params.delta, {0, 0, 0});
  for (std::size_t q = 0; q < 2; ++q)
    for (std::size_t c = 0; c < d; ++c)
      REQUIRE(out.vec()[q * d + c] == Catch::Approx(expect[c]).margin(1e-12));
}

TEST_CASE("vca matches the scripted oracle on a random tiny instance", "[attention]") {
  RngStream s(3, 0);
  std::size_t m = 2, n = 3, k = 2, d = 4;
  auto params = VcaParams<double>::make(d, d, d);
  params.init(split(s, "p"));

  auto pq = random_cloud(s, m);
  auto pkv = random_cloud(s, n);
  auto xq_v = testutil::random_vec(s, m * d);
  auto xkv_v = testutil::random_vec(s, n * d);
  auto xq = Tensor<double>::from({m, d}, xq_v);
  auto xkv = Tensor<double>::from({n, d}, xkv_v);
  auto nbh = knn(pq, pkv, k);

  auto out = vca(pq, xq, pkv, xkv, nbh, params);

  ScriptedVca oracle{d, params};
  std::vector<std::vector<double>> xkv_rows(n);
  for (std::size_t i = 0; i < n; ++i)
    xkv_rows[i] = {xkv_v.begin() + static_cast<std::ptrdiff_t>(i * d),
                   xkv_v.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)};
  for (std::size_t q = 0; q < m; ++q) {
    std::vector<double> xq_row = {xq_v.begin() + static_cast<std::ptrdiff_t>(q * d),
                                  xq_v.begin() + static_cast<std::ptrdiff_t>((q + 1) * d)};
    std::vector<int> nbrs(nbh.row(q), nbh.row(q) + k);
    auto exp = oracle.query(pq[q], xq_row, pkv, xkv_rows, nbrs);
    for (std::size_t c = 0; c < d; ++c)
      REQUIRE(out.vec()[q * d + c] == Catch::Approx(exp[c]).margin(1e-10));
  }
}

TEST_CASE("vca output depends only on neighborhood rows", "[attention]") {
  RngStream s(4, 0);
  std::size_t d = 4, k = 2, n = 6;
  auto params = VcaParams<double>::make(d, d, d);
  params.init(split(s, "p"));
  auto pq = random_cloud(s, 2);
  auto pkv = random_cloud(s, n);
  auto xq = Tensor<double>::from({2, d}, testutil::random_vec(s, 2 * d));
  auto xkv_v = testutil::random_vec(s, n * d);
  auto nbh = knn(pq, pkv, k);

  auto base = vca(pq, xq, pkv, Tensor<double>::from({n, d}, xkv_v), nbh, params);

  // zero a key-value feature row that is not in query 0's neighborhood
  std::set<int> q0(nbh.row(0), nbh.row(0) + k);
  int outsider = -1;
  for (int j = 0; j < static_cast<int>(n); ++j)
    if (!q0.count(j)) { outsider = j; break; }
  auto mutated = xkv_v;
  for (std::size_t c = 0; c < d; ++c) mutated[static_cast<std::size_t>(outsider) * d + c] = 0.0;
  auto changed = vca(pq, xq, pkv, Tensor<double>::from({n, d}, mutated), nbh, params);

  for (std::size_t c = 0; c < d; ++c)
    REQUIRE(changed.vec()[c] == base.vec()[c]);  // exact
}

TEST_CASE("vsa translation and permutation equivariance", "[attention]") {
  RngStream s(5, 0);
  std::size_t n = 8, d = 4, k = 3;
  auto params = VcaParams<double>::make(d, d, d);
  params.init(split(s, "p"));
  auto pts = random_cloud(s, n);
  auto xv = testutil::random_vec(s, n * d);
  auto x = Tensor<double>::from({n, d}, xv);

  auto base = vsa(pts, x, k, params);

  Vec3 t{0.05, -0.11, 0.07};
  std::vector<Vec3> moved(n);
  for (std::size_t i = 0; i < n; ++i) moved[i] = pts[i] + t;
  auto shifted = vsa(moved, x, k, params);
  for (std::size_t i = 0; i < base.size(); ++i)
    REQUIRE(shifted.vec()[i] == Catch::Approx(base.vec()[i]).margin(1e-6));

  std::vector<int> perm(static_cast<int>(n));
  for (int i = 0; i < static_cast<int>(n); ++i) perm[static_cast<std::size_t>(i)] = i;
  shuffle(s, perm);
  std::vector<Vec3> ppts(n);
  std::vector<double> pxv(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    ppts[i] = pts[static_cast<std::size_t>(perm[i])];
    for (std::size_t c = 0; c < d; ++c) pxv[i * d + c] = xv[static_cast<std::size_t>(perm[i]) * d + c];
  }
  auto permuted = vsa(ppts, Tensor<double>::from({n, d}, pxv), k, params);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      REQUIRE(permuted.vec()[i * d + c] ==
              Catch::Approx(base.vec()[static_cast<std::size_t>(perm[i]) * d + c]).margin(1e-9));

  // N=1, k=1 reduces to the single-neighbor vca case
  auto solo = vsa({pts[0]}, Tensor<double>::from({1, d}, {xv.begin(), xv.begin() + 4}), 1, params);
  REQUIRE(solo.size() == d);
}

TEST_CASE("ptb keeps positions and reduces to X + VSA(X) at identity BN", "[attention]") {
  RngStream s(6, 0);
  std::size_t n = 6, d = 4, k = 3;
  auto params = PtbParams<double>::make(d);
  params.init(split(s, "p"));
  auto pts = random_cloud(s, n);
  auto xv = testutil::random_vec(s, n * d);
  auto x = Tensor<double>::from({n, d}, xv);

  // eval-mode BN with fresh (identity) running stats
  auto out = ptb(pts, x, k, params, Mode::Eval);
  auto attended = vsa(pts, x, k, params.vca);
  for (std::size_t i = 0; i < out.size(); ++i)
    REQUIRE(out.vec()[i] ==
            Catch::Approx(xv[i] + attended.vec()[i]).margin(1e-4));
  // positions are never touched by construction: ptb takes them by const ref
}

TEST_CASE("ptb gradcheck on a 6-point cloud", "[attention]") {
  RngStream s(7, 0);
  std::size_t n = 6, d = 3, k = 3;
  auto params = PtbParams<double>::make(d);
  params.init(split(s, "p"));
  jitter_params<double>(params, split(s, "jitter"));  // off the ReLU kinks
  auto pts = random_cloud(s, n);
  auto xv = testutil::random_vec(s, n * d);
  auto proj = testutil::random_vec(s, n * d);

  auto loss_value = [&]() {
    auto x = Tensor<double>::from({n, d}, xv);
    auto out = ptb(pts, x, k, params, Mode::Train);
    double acc = 0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out.vec()[i] * proj[i];
    return acc;
  };

  Tape<double> tape;
  auto watched = params;
  watch_params(tape, watched);
  auto x = tape.watch(Tensor<double>::from({n, d}, xv));
  auto out = ptb(pts, x, k, watched, Mode::Train);
  tape.backward(sum_all(hadamard(out, Tensor<double>::from({n, d}, proj))));

  auto named = collect_params<double>(watched);
  for (const auto& np : named) {
    std::vector<double> analytic = tape.grad(*np.tensor);
    // FD through the original (shared-storage) parameters
    auto base = collect_params<double>(params);
    Tensor<double>* live = nullptr;
    for (auto& bp : base)
      if (bp.name == np.name) live = bp.tensor;
    REQUIRE(live != nullptr);
    std::vector<double> fd(live->size());
    for (std::size_t i = 0; i < live->size(); ++i) {
      double keep = live->vec()[i];
      live->vec()[i] = keep + 1e-5;
      double fp = loss_value();
      live->vec()[i] = keep - 1e-5;
      double fm = loss_value();
      live->vec()[i] = keep;
      fd[i] = (fp - fm) / 2e-5;
    }
    INFO(np.name);
    REQUIRE(max_rel_err(analytic, fd) < 1e-4);
  }
}
