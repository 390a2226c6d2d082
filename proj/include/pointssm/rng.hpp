#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pointssm {

// Deterministic splitmix64 generator. std::shuffle and the standard
// distributions are implementation-defined, so every draw that has to
// reproduce bit-for-bit goes through this class instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n); n must be positive
  int64_t uniform_int(int64_t n) {
    return int64_t((static_cast<__uint128_t>(next_u64()) *
                    static_cast<__uint128_t>(n)) >> 64);
  }

  // standard normal via Box-Muller, second value cached
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = int64_t(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[size_t(i)], v[size_t(j)]);
    }
  }

 private:
  uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Derives an independent stream seed from a base seed plus a tag and up to two
// indices (epoch, sample, ...). FNV-1a over the tag, then splitmix-style
// avalanche so nearby inputs land far apart.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0,
                            uint64_t b = 0) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  };
  for (char c : tag) {
    h ^= uint8_t(c);
    h *= 0x100000001b3ull;
  }
  mix(base);
  mix(a);
  mix(b);
  Rng r(h);
  return r.next_u64();
}

}  // namespace pointssm
