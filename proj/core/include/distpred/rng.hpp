#ifndef DISTPRED_RNG_HPP
#define DISTPRED_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace distpred {

// Seeded generator with explicitly coded variate transforms, so that a fixed
// seed gives the same stream on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_(splitmix(seed)), gen_(base_) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi]; modular bias is negligible for the small
  // ranges used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<std::int64_t>(gen_() % span);
  }

  // Standard normal via Box-Muller (cosine branch; two uniforms per draw).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Independent child stream; derive(salt) depends only on the original seed
  // and the salt, which keeps per-cell streams stable under reordering.
  Rng derive(std::uint64_t salt) const {
    return Rng(base_ ^ splitmix(salt + 0x9e3779b97f4a7c15ULL));
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t base_;
  std::mt19937_64 gen_;
};

}  // namespace distpred

#endif
