#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

#include "beamscope/types.hpp"

namespace beamscope {

// Seeded, splittable generator. Child streams are identified by (seed, key)
// so the same experiment seed always reproduces the same dataset regardless
// of how many draws the parent has made. All distributions are implemented
// here (not via <random> distribution classes, whose output is
// implementation-defined) so datasets are bit-identical across toolchains.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : seed_(seed), eng_(mix(seed, 0x6a09e667f3bcc908ull)) {}

  SplitRng split(std::uint64_t key) const { return SplitRng(mix(seed_, key), 0); }
  SplitRng split(std::string_view label) const { return split(fnv1a(label)); }

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform on the open interval (lo, hi); rejects the left endpoint
  double uniform_open(double lo, double hi) {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return lo + (hi - lo) * u;
  }

  // Box-Muller pair of independent standard normals
  std::pair<double, double> gaussian_pair() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    return {rad * std::cos(2.0 * kPi * u2), rad * std::sin(2.0 * kPi * u2)};
  }

  double gaussian() { return gaussian_pair().first; }

  // standard circularly-symmetric complex Gaussian, E|z|^2 = 1
  cx cnormal() {
    const auto [g1, g2] = gaussian_pair();
    return cx(g1, g2) * 0.7071067811865475244;
  }

 private:
  SplitRng(std::uint64_t derived, int) : seed_(derived), eng_(mix(derived, 0x6a09e667f3bcc908ull)) {}

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ splitmix64(b));
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace beamscope
