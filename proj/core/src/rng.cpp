#include "dassim/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dassim {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_key(std::uint64_t seed, std::uint64_t phase,
                      std::uint64_t step, std::uint64_t particle) {
  std::uint64_t k = splitmix64(seed ^ 0x243F6A8885A308D3ULL);
  k = splitmix64(k ^ phase);
  k = splitmix64(k ^ step);
  k = splitmix64(k ^ particle);
  return k;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t phase,
                     std::uint64_t step, std::uint64_t particle)
    : seed_(seed),
      phase_(phase),
      step_(step),
      particle_(particle),
      engine_(mix_key(seed, phase, step, particle)) {}

double RngStream::uniform() {
  // 53-bit mantissa of one engine word; exact range [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

Vector RngStream::normals(int n) {
  if (n < 0) throw std::invalid_argument("RngStream::normals: n must be >= 0");
  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = normal();
  return z;
}

}  // namespace dassim
