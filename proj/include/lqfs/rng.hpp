#pragma once

// Counter-based, splittable 64-bit generator. The n-th output of stream
// (seed, stream) is a SplitMix64 finalizer of a Weyl sequence, so streams can
// be derived for any (r, seed, replication) triple without shared state.

#include <cmath>
#include <cstdint>
#include <limits>

namespace lqfs {

class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  // Independent child stream; does not advance this generator.
  CounterRng split(std::uint64_t k) const {
    CounterRng child;
    child.key_ = mix(key_ ^ mix(k + 0xd1b54a32d192ed03ULL));
    return child;
  }

  // Uniform on (0, 1): 53 random mantissa bits, offset by half an ulp.
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do x = (*this)();
    while (x >= limit);
    return x % n;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace lqfs
