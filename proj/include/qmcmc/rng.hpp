#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace qmcmc {

/// Stateless counter-based generator: every draw is a pure function of its key,
/// so disorder is independent of draw order and thread schedule.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  /// Derive an independent stream (e.g. per instance, per coupling family).
  constexpr CounterRng stream(std::uint64_t id) const noexcept {
    return CounterRng(mix(seed_ ^ mix(id + 0x632be59bd9b4e019ULL)));
  }

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix(seed_ + mix(counter ^ 0xd1b54a32d192ed03ULL));
  }

  /// Uniform in the open interval (0, 1).
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const noexcept {
    return lo + (hi - lo) * uniform(counter);
  }

  /// Standard normal via Box-Muller on two sub-counters.
  double normal(std::uint64_t counter) const noexcept {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    // splitmix64 finaliser
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
};

}  // namespace qmcmc
