#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace xlemb {

// Deterministic RNG. All distribution transforms are hand-rolled so streams
// are reproducible across platforms and standard libraries
// (std::uniform_real_distribution et al. are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  // Derives an independent child stream from a label. Same (seed, label)
  // always yields the same stream regardless of how much the parent was used.
  Rng child(std::string_view label) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
    for (int i = 0; i < 8; ++i) {
      h ^= (seed_ >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return Rng(h);
  }

  Rng child(std::string_view label, std::uint64_t n) const {
    std::uint64_t base = child(label).seed_;
    std::uint64_t h = base ^ (n * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return Rng(h);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (cached spare).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 gen_{0};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace xlemb
