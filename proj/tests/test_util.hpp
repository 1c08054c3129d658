#ifndef AIRNET_TEST_UTIL_HPP
#define AIRNET_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "airnet/rng.hpp"

namespace testutil {

// Central finite differences in f64; the independent oracle for every
// gradient assertion. Only forward evaluations are used.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double fp = f(x);
    x[i] = keep - h;
    double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& fd,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

inline std::vector<double> random_vec(airnet::RngStream& s, std::size_t n, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = airnet::uniform_in(s, lo, hi);
  return v;
}

}  // namespace testutil

#endif
