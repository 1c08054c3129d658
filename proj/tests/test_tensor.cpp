#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "airnet/nn.hpp"
#include "airnet/tensor.hpp"
#include "test_util.hpp"

using namespace airnet;
using testutil::fd_gradient;
using testutil::max_rel_err;

namespace {

Tensor<double> t2(std::size_t n, std::size_t d, std::vector<double> v) {
  return Tensor<double>::from({n, d}, std::move(v));
}

}  // namespace

TEST_CASE("linear identity and hand sum", "[tensor]") {
  auto x = t2(2, 2, {1, 0, 0, 1});
  auto w = t2(2, 2, {1, 0, 0, 1});
  auto y = linear(x, w);
  REQUIRE(y.vec() == std::vector<double>{1, 0, 0, 1});

  auto x2 = t2(1, 2, {1, 2});
  auto w2 = t2(2, 1, {1, 1});
  auto b2 = Tensor<double>::from({1}, {3});
  auto y2 = linear(x2, w2, b2);
  REQUIRE(y2.vec()[0] == Catch::Approx(6.0));

  REQUIRE_THROWS_AS(linear(x2, t2(3, 1, {1, 1, 1})), InvalidArgument);
}

TEST_CASE("linear gradient of sum equals columnwise X sums", "[tensor]") {
  RngStream s(7, 0);
  auto xv = testutil::random_vec(s, 12);
  auto wv = testutil::random_vec(s, 6);

  Tape<double> tape;
  auto x = t2(4, 3, xv);
  auto w = tape.watch(t2(3, 2, wv));
  auto loss = sum_all(linear(x, w));
  tape.backward(loss);
  auto gw = tape.grad(w);

  // d/dW sum(XW) = columnwise sums of X, replicated over output columns
  for (std::size_t i = 0; i < 3; ++i) {
    double col = xv[i] + xv[3 + i] + xv[6 + i] + xv[9 + i];
    REQUIRE(gw[i * 2 + 0] == Catch::Approx(col).margin(1e-12));
    REQUIRE(gw[i * 2 + 1] == Catch::Approx(col).margin(1e-12));
  }

  // and matches finite differences
  auto f = [&](const std::vector<double>& p) {
    auto out = linear(t2(4, 3, xv), t2(3, 2, p));
    double acc = 0;
    for (double v : out.vec()) acc += v;
    return acc;
  };
  REQUIRE(max_rel_err(gw, fd_gradient(f, wv)) < 1e-4);
}

TEST_CASE("relu forward and gradcheck at +-0.5", "[tensor]") {
  auto y = relu(Tensor<double>::from({3}, {-1, 0, 2}));
  REQUIRE(y.vec() == std::vector<double>{0, 0, 2});
  auto pos = relu(Tensor<double>::from({3}, {0.5, 1.5, 2.5}));
  REQUIRE(pos.vec() == std::vector<double>{0.5, 1.5, 2.5});

  std::vector<double> xv = {0.5, -0.5};
  Tape<double> tape;
  auto x = tape.watch(Tensor<double>::from({2}, xv));
  auto loss = sum_all(hadamard(relu(x), relu(x)));
  tape.backward(loss);
  auto f = [](const std::vector<double>& p) {
    double acc = 0;
    for (double v : p) {
      double r = v > 0 ? v : 0;
      acc += r * r;
    }
    return acc;
  };
  REQUIRE(max_rel_err(tape.grad(x), fd_gradient(f, xv)) < 1e-4);
}

TEST_CASE("channel_softmax closed forms", "[tensor]") {
  auto one = channel_softmax(Tensor<double>::from({2, 1, 3}, {5, -1, 0, 3, 3, 3}));
  for (double v : one.vec()) REQUIRE(v == Catch::Approx(1.0));

  auto flat = channel_softmax(Tensor<double>::from({1, 4, 2}, std::vector<double>(8, 0.7)));
  for (double v : flat.vec()) REQUIRE(v == Catch::Approx(0.25));

  double l3 = std::log(3.0);
  auto pair = channel_softmax(Tensor<double>::from({1, 2, 2}, {0, 0, l3, l3}));
  REQUIRE(pair.vec()[0] == Catch::Approx(0.25).epsilon(1e-9));
  REQUIRE(pair.vec()[1] == Catch::Approx(0.25).epsilon(1e-9));
  REQUIRE(pair.vec()[2] == Catch::Approx(0.75).epsilon(1e-9));
  REQUIRE(pair.vec()[3] == Catch::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("channel_softmax simplex property and gradcheck", "[tensor]") {
  RngStream s(11, 0);
  std::size_t n = 3, k = 5, d = 4;
  auto sv = testutil::random_vec(s, n * k * d, -2, 2);
  auto y = channel_softmax(Tensor<double>::from({n, k, d}, sv));
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < k; ++j) {
        double v = y.vec()[(q * k + j) * d + c];
        REQUIRE(v >= 0.0);
        acc += v;
      }
      REQUIRE(acc == Catch::Approx(1.0).margin(1e-6));
    }

  auto wv = testutil::random_vec(s, n * k * d);  // random projection to scalar
  Tape<double> tape;
  auto x = tape.watch(Tensor<double>::from({n, k, d}, sv));
  auto loss = sum_all(hadamard(channel_softmax(x), Tensor<double>::from({n, k, d}, wv)));
  tape.backward(loss);
  auto f = [&](const std::vector<double>& p) {
    auto out = channel_softmax(Tensor<double>::from({n, k, d}, p));
    double acc = 0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out.vec()[i] * wv[i];
    return acc;
  };
  REQUIRE(max_rel_err(tape.grad(x), fd_gradient(f, sv)) < 1e-4);
}

TEST_CASE("batch_norm eval identity and train hand case", "[tensor]") {
  auto bn = BnState<double>::make(1);
  auto x = t2(2, 1, {0.3, -0.8});
  auto y = batch_norm(x, bn, Mode::Eval);
  REQUIRE(y.vec()[0] == Catch::Approx(0.3).epsilon(1e-5));
  REQUIRE(y.vec()[1] == Catch::Approx(-0.8).epsilon(1e-5));

  auto yt = batch_norm(t2(2, 1, {0.0, 2.0}), bn, Mode::Train);
  REQUIRE(yt.vec()[0] == Catch::Approx(-1.0).margin(1e-4));
  REQUIRE(yt.vec()[1] == Catch::Approx(1.0).margin(1e-4));
  // running stats moved toward batch stats with momentum 0.1 (unbiased var)
  REQUIRE(bn.running_mean.vec()[0] == Catch::Approx(0.1));
  REQUIRE(bn.running_var.vec()[0] == Catch::Approx(0.9 + 0.1 * 2.0));

  REQUIRE_THROWS_AS(batch_norm(t2(1, 1, {1.0}), bn, Mode::Train), InvalidArgument);
}

TEST_CASE("batch_norm gradcheck vs finite differences", "[tensor]") {
  RngStream s(21, 0);
  std::size_t n = 6, d = 3;
  auto xv = testutil::random_vec(s, n * d);
  auto wv = testutil::random_vec(s, n * d);

  for (Mode mode : {Mode::Train, Mode::Eval}) {
    auto eval = [&](const std::vector<double>& p) {
      auto bn = BnState<double>::make(d);
      bn.running_mean.vec() = {0.1, -0.2, 0.05};
      bn.running_var.vec() = {1.2, 0.8, 1.0};
      auto out = batch_norm(t2(n, d, p), bn, mode);
      double acc = 0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += out.vec()[i] * wv[i];
      return acc;
    };
    auto bn = BnState<double>::make(d);
    bn.running_mean.vec() = {0.1, -0.2, 0.05};
    bn.running_var.vec() = {1.2, 0.8, 1.0};
    Tape<double> tape;
    auto x = tape.watch(t2(n, d, xv));
    auto g = tape.watch(bn.gamma);
    auto b = tape.watch(bn.beta);
    bn.gamma = g;
    bn.beta = b;
    auto loss = sum_all(hadamard(batch_norm(x, bn, mode), t2(n, d, wv)));
    tape.backward(loss);
    REQUIRE(max_rel_err(tape.grad(x), fd_gradient(eval, xv)) < 1e-4);
  }
}

TEST_CASE("maxpool_rows forward and argmax gradient", "[tensor]") {
  auto single = maxpool_rows(t2(1, 3, {4, -1, 2}));
  REQUIRE(single.vec() == std::vector<double>{4, -1, 2});

  auto y = maxpool_rows(t2(2, 2, {1, 5, 3, 2}));
  REQUIRE(y.vec() == std::vector<double>{3, 5});

  std::vector<double> xv = {1, 5, 3, 2};
  Tape<double> tape;
  auto x = tape.watch(t2(2, 2, xv));
  tape.backward(sum_all(maxpool_rows(x)));
  auto g = tape.grad(x);
  REQUIRE(g == std::vector<double>{0, 1, 1, 0});

  auto f = [](const std::vector<double>& p) {
    return std::max(p[0], p[2]) + std::max(p[1], p[3]);
  };
  REQUIRE(max_rel_err(g, fd_gradient(f, xv)) < 1e-4);
}

TEST_CASE("backward composes through the chain rule", "[tensor]") {
  // loss = sum(W x): dW = x replicated per output row
  Tape<double> tape;
  auto w = tape.watch(t2(2, 3, {1, 2, 3, 4, 5, 6}));
  auto x = t2(3, 1, {10, 20, 30});
  tape.backward(sum_all(linear(w, x)));
  REQUIRE(tape.grad(w) == std::vector<double>{10, 20, 30, 10, 20, 30});

  // f(x) = relu(x)^2 at x=2 -> grad 4
  Tape<double> tape2;
  auto x2 = tape2.watch(Tensor<double>::scalar(2.0));
  auto r = relu(x2);
  tape2.backward(sum_all(hadamard(r, r)));
  REQUIRE(tape2.grad(x2)[0] == Catch::Approx(4.0));

  // non-scalar loss rejected; unreached leaves get zeros
  Tape<double> tape3;
  auto a = tape3.watch(t2(1, 2, {1, 2}));
  auto b = tape3.watch(t2(1, 2, {3, 4}));
  REQUIRE_THROWS_AS(tape3.backward(relu(a)), InvalidArgument);
  Tape<double> tape4;
  auto a4 = tape4.watch(t2(1, 2, {1, 2}));
  auto b4 = tape4.watch(t2(1, 2, {3, 4}));
  tape4.backward(sum_all(a4));
  REQUIRE(tape4.grad(b4) == std::vector<double>{0, 0});
}

TEST_CASE("gather/segment/concat ops gradcheck", "[tensor]") {
  RngStream s(31, 0);
  std::size_t n = 4, d = 3;
  auto xv = testutil::random_vec(s, n * d);
  std::vector<int> idx = {2, 0, 3, 3, 1, 0};
  std::vector<double> rw = {0.5, 1.5, -1, 2, 0.25, 1};
  auto proj = testutil::random_vec(s, 3 * 2 * d);

  auto forward = [&](const std::vector<double>& p, Tape<double>* tape) {
    Tensor<double> x = t2(n, d, p);
    if (tape) x = tape->watch(x);
    auto gathered = gather_rows(x, idx);
    auto scaled = row_scale(gathered, rw);
    auto summed = segment_sum(scaled, 2);                       // 3 x d
    auto both = concat_cols(summed, segment_sum(gathered, 2));  // 3 x 2d
    return sum_all(hadamard(both, Tensor<double>::from({3, 2 * d}, proj)));
  };

  Tape<double> tape;
  auto x = tape.watch(t2(n, d, xv));
  auto gathered = gather_rows(x, idx);
  auto scaled = row_scale(gathered, rw);
  auto summed = segment_sum(scaled, 2);
  auto both = concat_cols(summed, segment_sum(gathered, 2));
  tape.backward(sum_all(hadamard(both, Tensor<double>::from({3, 2 * d}, proj))));

  auto f = [&](const std::vector<double>& p) { return forward(p, nullptr).vec()[0]; };
  REQUIRE(max_rel_err(tape.grad(x), fd_gradient(f, xv)) < 1e-4);

  // segment_max picks per-channel maxima
  auto m = segment_max(t2(4, 2, {1, 9, 5, 2, 0, 0, 3, -1}), 2);
  REQUIRE(m.vec() == std::vector<double>{5, 9, 3, 0});

  // concat_rows stacks and routes gradients to both halves
  Tape<double> tc;
  auto a = tc.watch(t2(1, 2, {1, 2}));
  auto b = tc.watch(t2(2, 2, {3, 4, 5, 6}));
  tc.backward(sum_all(concat_rows(a, b)));
  REQUIRE(tc.grad(a) == std::vector<double>{1, 1});
  REQUIRE(tc.grad(b) == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("bce_with_logits matches closed forms", "[tensor]") {
  // probability 0.5 everywhere -> ln 2
  auto l = bce_with_logits_mean(Tensor<double>::from({4}, {0, 0, 0, 0}), {1, 0, 1, 0});
  REQUIRE(l.vec()[0] == Catch::Approx(std::log(2.0)).epsilon(1e-9));

  // gradient: (sigmoid(z) - y)/n
  std::vector<double> zv = {0.3, -1.2, 2.0};
  std::vector<double> yv = {1, 0, 1};
  Tape<double> tape;
  auto z = tape.watch(Tensor<double>::from({3}, zv));
  tape.backward(bce_with_logits_mean(z, yv));
  auto f = [&](const std::vector<double>& p) {
    double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double prob = 1.0 / (1.0 + std::exp(-p[i]));
      acc += -(yv[i] * std::log(prob) + (1 - yv[i]) * std::log(1 - prob));
    }
    return acc / static_cast<double>(p.size());
  };
  REQUIRE(max_rel_err(tape.grad(z), fd_gradient(f, zv)) < 1e-4);

  REQUIRE_THROWS_AS(bce_with_logits_mean(Tensor<double>::from({1}, {0.0}), {0.5}),
                    InvalidArgument);
}

TEST_CASE("adam closed-form first steps", "[tensor]") {
  // zero gradient leaves parameters untouched
  auto p = Tensor<double>::from({3}, {1.0, -2.0, 0.5});
  AdamState<double> st;
  adam_step<double>({&p}, {std::vector<double>(3, 0.0)}, st, 0.01);
  REQUIRE(p.vec() == std::vector<double>{1.0, -2.0, 0.5});

  // constant gradient, step 1: update = -lr * g / (|g| + eps) ~ -lr * sign(g)
  auto q = Tensor<double>::from({2}, {0.0, 0.0});
  AdamState<double> st2;
  adam_step<double>({&q}, {std::vector<double>{0.4, -0.7}}, st2, 0.001);
  REQUIRE(q.vec()[0] == Catch::Approx(-0.001).epsilon(1e-4));
  REQUIRE(q.vec()[1] == Catch::Approx(0.001).epsilon(1e-4));

  // two steps against a scripted trace
  double g = 0.25, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0, x = 1.0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
  }
  auto r = Tensor<double>::from({1}, {1.0});
  AdamState<double> st3;
  adam_step<double>({&r}, {std::vector<double>{g}}, st3, lr);
  adam_step<double>({&r}, {std::vector<double>{g}}, st3, lr);
  REQUIRE(r.vec()[0] == Catch::Approx(x).epsilon(1e-12));

  REQUIRE_THROWS_AS(adam_step<double>({&r}, {std::vector<double>{1, 2}}, st3, lr),
                    InvalidArgument);
}

TEST_CASE("non-finite values are policed when checks are on", "[tensor]") {
  bool before = finite_checks();
  set_finite_checks(true);
  auto inf = Tensor<double>::from({1}, {std::numeric_limits<double>::infinity()});
  REQUIRE_THROWS_AS(relu(inf), NumericError);
  set_finite_checks(before);
}
