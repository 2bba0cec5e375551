#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace geomgcn {

/// Stateless 64-bit mixer (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

/// Counter-based generator: the n-th draw is a pure function of (key, n).
/// Sub-streams are derived with `fork`, so independent consumers never share
/// state and any draw can be reproduced by random access via `at`.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t seed = 0) noexcept : key_(mix64(seed)) {}

  [[nodiscard]] constexpr CounterRng fork(std::uint64_t tag) const noexcept {
    CounterRng child;
    child.key_ = hash_combine(key_, tag);
    return child;
  }

  [[nodiscard]] constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter));
  }

  constexpr std::uint64_t operator()() noexcept { return at(counter_++); }

  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return std::numeric_limits<std::uint64_t>::max(); }

  /// Uniform double in [0, 1).
  double uniform() noexcept { return to_unit((*this)()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  [[nodiscard]] double uniform_at(std::uint64_t counter) const noexcept { return to_unit(at(counter)); }

  /// Uniform integer in [0, bound). Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x = (*this)();
    while (x >= limit) x = (*this)();
    return x % bound;
  }

  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr double to_unit(std::uint64_t x) noexcept {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle driven by a CounterRng.
template <class Range>
void shuffle(Range& range, CounterRng& rng) {
  const auto n = static_cast<std::uint64_t>(std::size(range));
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    using std::swap;
    swap(range[i - 1], range[j]);
  }
}

}  // namespace geomgcn
