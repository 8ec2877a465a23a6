#pragma once

// Per-sample random streams derived from (seed, indices), so sampled results do
// not depend on evaluation order.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace nlqual {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ (b * 0x632be59bd9b4e019ULL));
  s = splitmix64(s ^ (c * 0x8cb92ba72f3d8dd7ULL));
  return std::mt19937_64(s);
}

// Uniform point in the Euclidean ball of radius r.
inline std::vector<double> sample_ball(std::mt19937_64& rng, std::size_t d, double r) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(d);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& x : v) {
      x = g(rng);
      n2 += x * x;
    }
  } while (n2 == 0.0);
  double scale = r * std::pow(u(rng), 1.0 / static_cast<double>(d)) / std::sqrt(n2);
  for (auto& x : v) x *= scale;
  return v;
}

}  // namespace nlqual
