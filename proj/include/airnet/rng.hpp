#ifndef AIRNET_RNG_HPP
#define AIRNET_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "airnet/common.hpp"

namespace airnet {

namespace detail {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d4a2c62d02b5f5ULL;
  z ^= z >> 31;
  return z;
}
}  // namespace detail

// Counter-based stream: output i is a pure function of (seed, stream, i), so
// sequences are reproducible across platforms and splits never perturb the
// parent. Not cryptographic.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t counter = 0;

  explicit RngStream(std::uint64_t seed_ = 0, std::uint64_t stream_ = 0)
      : seed(seed_), stream(stream_) {}

  std::uint64_t next_u64() {
    std::uint64_t key = detail::mix64(detail::mix64(seed + detail::kGolden) ^
                                      (stream * 0xbf58476d1ce4e5b9ULL));
    return detail::mix64(key + (counter++) * detail::kGolden);
  }

  // [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, bound) via 128-bit multiply.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }
};

inline RngStream split(const RngStream& parent, std::uint64_t label) {
  RngStream child(parent.seed,
                  detail::mix64(parent.stream ^ detail::mix64(label + detail::kGolden)));
  return child;
}

inline RngStream split(const RngStream& parent, std::string_view label) {
  return split(parent, fnv1a64(label.data(), label.size()));
}

inline std::vector<double> uniform(RngStream& s, std::size_t n) {
  std::vector<double> out(n);
  for (auto& x : out) x = s.next_double();
  return out;
}

inline double uniform_in(RngStream& s, double lo, double hi) {
  return lo + (hi - lo) * s.next_double();
}

// Box-Muller over the counter stream; pairs are consumed in order so results
// do not depend on how calls are batched.
inline std::vector<double> gaussian(RngStream& s, std::size_t n, double sigma = 1.0) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; i += 2) {
    double u1 = static_cast<double>((s.next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = s.next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    out[i] = sigma * r * std::cos(a);
    if (i + 1 < n) out[i + 1] = sigma * r * std::sin(a);
  }
  return out;
}

// First k entries of a Fisher-Yates shuffle of 0..n-1 (sampling without replacement).
inline std::vector<int> sample_without_replacement(RngStream& s, int n, int k) {
  require(k >= 0 && k <= n, "sample_without_replacement: k out of range");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(s.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

inline void shuffle(RngStream& s, std::vector<int>& v) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    std::size_t j = i + static_cast<std::size_t>(s.next_below(v.size() - i));
    std::swap(v[i], v[j]);
  }
}

}  // namespace airnet

#endif
