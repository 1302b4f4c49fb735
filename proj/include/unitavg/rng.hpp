#pragma once

#include <cstdint>
#include <initializer_list>

namespace unitavg {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
  z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
  return z ^ (z >> 31);
}

/// Derives a stream key from a master seed and a path of indices
/// (grid point, replication, unit, ...). Distinct paths give unrelated keys.
std::uint64_t stream_key(std::uint64_t seed,
                         std::initializer_list<std::uint64_t> path) noexcept;

/// Counter-based generator: the k-th output of a stream is a pure function of
/// (key, k), so any draw index can be reproduced without replaying others.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept
      : key_(stream_key(seed, path)) {}

  std::uint64_t next_u64() noexcept {
    return mix64(key_ + (++counter_) * UINT64_C(0x9E3779B97F4A7C15));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal (Box-Muller, second variate cached).
  double normal() noexcept;
  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  /// Exponential with unit rate.
  double exponential() noexcept;

  /// Child stream; does not advance this one.
  CounterRng split(std::uint64_t index) const noexcept {
    return CounterRng(stream_key(key_, {index}));
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace unitavg
