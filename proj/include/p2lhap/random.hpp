#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>

namespace p2lhap {

/// xoshiro256** seeded through SplitMix64 (Blackman & Vigna constants).
///
/// Every random draw in the library goes through this generator so that
/// initialization, shuffling, dropout and synthetic data are reproducible
/// across platforms; std distributions are implementation-defined and are
/// not used.
class Rng {
 public:
  struct State {
    std::array<std::uint64_t, 4> words{};
    bool has_spare_normal = false;
    double spare_normal = 0.0;
    friend bool operator==(const State&, const State&) = default;
  };

  explicit Rng(std::uint64_t seed = 0x9E3779B97F4A7C15ULL);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via the Box-Muller transform.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename U>
  void shuffle(std::span<U> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent stream derived from this generator's next output.
  Rng split() { return Rng(next_u64()); }

  const State& state() const noexcept { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  State state_;
};

}  // namespace p2lhap
