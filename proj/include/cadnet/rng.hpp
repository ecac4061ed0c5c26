#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace cadnet {

// Deterministic, serializable PRNG (splitmix64 core). std::mt19937 with the
// standard distributions is not bit-stable across library implementations,
// and checkpoints need to carry RNG state, so we keep our own.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Derives an independent stream; used to split one root seed per subsystem.
  Rng split(uint64_t stream_id) {
    uint64_t s = next_u64();
    return Rng(s ^ (stream_id * 0xd6e8feb86659fd93ull));
  }

  // Uniform integer in [0, n), n > 0. Rejection-free modulo is fine here:
  // n is always tiny relative to 2^64 so the bias is unobservable.
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Uniform float in [0, 1).
  float uniform() {
    return static_cast<float>((next_u64() >> 40) * 0x1.0p-24);
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (one value per call, no cached spare,
  // keeping the state trivially serializable).
  float normal() {
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    return std::sqrt(-2.0f * std::log(u1)) *
           std::cos(6.28318530717958647692f * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

}  // namespace cadnet
