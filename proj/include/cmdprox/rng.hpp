#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace cmdprox {

// SplitMix64 finalizer, used only for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based seed derivation: record i of a run seeded with `master` uses
// derive_seed(master, i). O(1) per counter, so records can be generated
// independently (and in any order) with identical output.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
  return splitmix64(master ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
}

// mt19937_64 is fully specified by the standard and the uint64->double
// mapping below is exact, so draws are bit-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Inverse-CDF draw from an unnormalized nonnegative weight vector.
  int categorical(std::span<const double> w) {
    double total = 0.0;
    for (double v : w) total += v;
    const double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace cmdprox
