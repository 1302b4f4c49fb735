#include "unitavg/rng.hpp"

#include <cmath>
#include <numbers>

namespace unitavg {

std::uint64_t stream_key(std::uint64_t seed,
                         std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t k = mix64(seed ^ UINT64_C(0x6A09E667F3BCC909));
  for (std::uint64_t p : path) {
    k = mix64(k + UINT64_C(0x9E3779B97F4A7C15) + mix64(p + UINT64_C(0xBB67AE8584CAA73B)));
  }
  return k;
}

double CounterRng::normal() noexcept {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

double CounterRng::exponential() noexcept { return -std::log(uniform()); }

}  // namespace unitavg
