#pragma once
// Counter-based random number generation. Every draw is a pure function of
// (seed, stream, counter), so sequences are bit-identical across runs and
// thread schedules, and independent streams can be split off cheaply.

#include <cstdint>
#include <cmath>
#include <string_view>

namespace mupar {

// Stafford mix13 finalizer; also used as a general-purpose hash.
inline uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

inline uint64_t hash_str(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class SeededRng {
public:
  explicit SeededRng(uint64_t seed, uint64_t stream = 0) : counter_(0) {
    base_ = mix64(seed + 0x9e3779b97f4a7c15ull) ^ mix64(stream * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull);
    gamma_ = mix64(base_ + stream) | 1ull;
    // avoid weak gammas (SplitMix64 recommendation)
    if (__builtin_popcountll(gamma_ ^ (gamma_ >> 1)) < 24) gamma_ ^= 0xaaaaaaaaaaaaaaaaull;
  }

  // independent stream derived from this one; does not disturb our counter
  SeededRng fork(uint64_t substream) const {
    SeededRng r(base_, mix64(gamma_ + substream * 0x9e3779b97f4a7c15ull));
    return r;
  }
  SeededRng fork(std::string_view name) const { return fork(hash_str(name)); }

  uint64_t word_at(uint64_t counter) const { return mix64(base_ + gamma_ * (counter + 1)); }

  uint64_t u64() { return word_at(counter_++); }

  // uniform in (0,1), never exactly 0 or 1
  double u01() { return (double(u64() >> 11) + 0.5) * 0x1.0p-53; }

  // uniform integer in [0, n), multiply-shift (bias < 2^-64, immaterial here)
  int64_t uniform_int(int64_t n) {
    return int64_t((__uint128_t(u64()) * __uint128_t(n)) >> 64);
  }

  // standard normal via Box-Muller; consumes two counters per pair
  void gaussian_pair(double& z0, double& z1) {
    double u1 = u01(), u2 = u01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 6.283185307179586476925286766559 * u2;
    z0 = r * std::cos(t);
    z1 = r * std::sin(t);
  }
  double gaussian() {
    double z0, z1;
    gaussian_pair(z0, z1);
    return z0;
  }

  uint64_t counter() const { return counter_; }

private:
  uint64_t base_;
  uint64_t gamma_;
  uint64_t counter_;
};

}  // namespace mupar
