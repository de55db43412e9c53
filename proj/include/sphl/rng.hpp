// Counter-based random streams and an exact Poisson sampler.
//
// Each (seed, stream) pair names an independent sequence, so a simulated cube
// can draw entry (k, n, t) from stream index((k, n, t)) in any order or on any
// thread and still reproduce the same bits.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace sphl {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_{0};
};

/// Exact Poisson draw: sequential inversion below mean 10, Hoermann's
/// transformed rejection (PTRS) above.
template <typename Rng>
std::uint32_t sample_poisson(double mean, Rng& rng) {
  if (!(mean > 0.0)) return 0;
  if (mean < 10.0) {
    const double u = rng.uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint32_t k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
      if (p == 0.0) break;
    }
    return k;
  }
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint32_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint32_t>(k);
    }
  }
}

}  // namespace sphl
