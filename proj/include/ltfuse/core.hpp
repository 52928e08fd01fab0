#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace ltfuse {

// Input that violates a data or configuration contract. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A fit that cannot be computed on valid input (empty nuisance cell, rank failure,
// positivity failure). The CLI maps this to exit code 3.
class EstimationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Group : std::uint8_t { Experimental, Observational };

inline constexpr char group_code(Group g) { return g == Group::Experimental ? 'E' : 'O'; }

inline Group parse_group(std::string_view s) {
  if (s == "E") return Group::Experimental;
  if (s == "O") return Group::Observational;
  throw ValidationError("group value must be \"E\" or \"O\", got \"" + std::string(s) + "\"");
}

// (g,w) cell label such as "E1" or "O0".
inline std::string cell_label(Group g, int w) {
  return std::string(1, group_code(g)) + std::to_string(w);
}

struct Warning {
  std::string code;
  std::string message;

  friend bool operator==(const Warning&, const Warning&) = default;
};

using Warnings = std::vector<Warning>;

inline void append(Warnings& into, const Warnings& from) {
  into.insert(into.end(), from.begin(), from.end());
}

// Pairwise (cascade) summation; rounding error grows as O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> v) {
  constexpr std::size_t block = 16;
  if (v.size() <= block) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_mean(std::span<const double> v) {
  return pairwise_sum(v) / static_cast<double>(v.size());
}

// splitmix64 finalizer; used to derive independent stream seeds from (base, index)
// so that replicate i gets the same seed regardless of scheduling.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(mix64(base) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

// Thread count from LTFUSE_THREADS, falling back to 1.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("LTFUSE_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

// Runs fn(i) for i in [0, n). Work is claimed dynamically; callers write results into
// slot i so output order never depends on completion order. The first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mutex;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mutex);
        if (next >= n || failure) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

} // namespace ltfuse
