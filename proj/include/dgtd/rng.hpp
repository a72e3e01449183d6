#pragma once

#include <cstdint>

namespace dgtd {

// Deterministic 64-bit generator (splitmix64).  We avoid <random>
// distributions so that draws are bit-identical across platforms and
// standard-library versions; reproducibility of traces is a contract here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Derives an independent stream seed from (base, a, b), e.g. one stream
  // per (replica, agent) pair.
  static std::uint64_t derive(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    Rng r(base ^ (a * 0xd1342543de82ef95ULL) ^ (b * 0xaf251af3b0f025b5ULL));
    r.next_u64();
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace dgtd
