#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace aal {

/// Seeded generator used for every stochastic choice in the library, so a
/// (seed, config) pair fixes parameters, data order and augmentation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
    return dist(engine_);
  }

  /// Integer in the closed range [lo, hi].
  int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

  double normal(double stddev) { return normal_(engine_) * stddev; }

  /// Normal sample redrawn until it lies within +-2 standard deviations.
  double truncated_normal(double stddev) {
    for (;;) {
      const double z = normal_(engine_);
      if (z >= -2.0 && z <= 2.0) return z * stddev;
    }
  }

  template <typename V>
  void shuffle(std::span<V> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace aal
