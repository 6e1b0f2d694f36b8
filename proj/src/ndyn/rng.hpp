#pragma once

#include <cstdint>

namespace ndyn {

// Counter-based generator: value = mix(key, counter). Streams keyed by
// (seed, stream) are independent and a stream can be replayed from any
// counter, which keeps parallel merges deterministic regardless of thread
// scheduling.
class CounterRng {
public:
  CounterRng(uint64_t seed, uint64_t stream) : key_(derive_key(seed, stream)) {}

  uint64_t at(uint64_t counter) const {
    uint64_t z = key_ + counter * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    z = (z ^ (z >> 29)) * 0xff51afd7ed558ccdULL;
    z ^= z >> 32;
    return z;
  }

  uint64_t next() { return at(counter_++); }

  // Uniform in [0,1), 53 mantissa bits.
  double next_double() { return double(next() >> 11) * 0x1.0p-53; }
  double double_at(uint64_t counter) const {
    return double(at(counter) >> 11) * 0x1.0p-53;
  }

  uint64_t counter() const { return counter_; }
  void seek(uint64_t counter) { counter_ = counter; }

private:
  static uint64_t derive_key(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace ndyn
