#ifndef AIRNET_COMMON_HPP
#define AIRNET_COMMON_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace airnet {

// Contract violations (bad arguments, malformed files). CLI maps these to exit code 1.
class InvalidArgument : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numeric failures (NaN/Inf, gradcheck failures). CLI maps these to exit code 2.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

// Runtime toggle for per-op NaN/Inf policing. On by default in debug builds.
inline std::atomic<bool>& finite_checks_flag() {
#ifdef NDEBUG
  static std::atomic<bool> flag{false};
#else
  static std::atomic<bool> flag{true};
#endif
  return flag;
}
inline bool finite_checks() { return finite_checks_flag().load(std::memory_order_relaxed); }
inline void set_finite_checks(bool on) { finite_checks_flag().store(on); }

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* where) {
  if (!finite_checks()) return;
  for (const T& x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string("non-finite value in ") + where);
  }
}

// Worker count: hardware concurrency capped by the AIRNET_THREADS env var.
inline int max_threads() {
  static int n = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("AIRNET_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1 && cap < hw) hw = cap;
    }
    return hw;
  }();
  return n;
}

// Deterministic chunked parallel loop: fn(begin, end) over disjoint ranges.
// Callers must write only to per-index slots so results match the serial run.
template <typename Fn>
inline void parallel_for(std::size_t n, Fn&& fn, std::size_t min_grain = 256) {
  int workers = max_threads();
  if (workers <= 1 || n < 2 * min_grain) {
    fn(std::size_t{0}, n);
    return;
  }
  std::size_t chunks = static_cast<std::size_t>(workers);
  std::size_t grain = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    std::size_t b = c * grain;
    std::size_t e = std::min(n, b + grain);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace airnet

#endif
