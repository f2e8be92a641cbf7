#pragma once

#include <cstdint>
#include <random>

#include "dassim/types.hpp"

namespace dassim {

// Deterministic random stream keyed by (seed, phase, step, particle).
// Identical keys produce identical draw sequences; distinct keys produce
// streams of independent quality (SplitMix64-mixed mt19937_64 seeding).
// uniform() consumes one engine word; normal() consumes exactly two, so
// draw counts per call are fixed and stream alignment is reproducible.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t phase = 0,
                     std::uint64_t step = 0, std::uint64_t particle = 0);

  // Same seed/phase, new step, particle reset to 0.
  RngStream at_step(std::uint64_t step) const {
    return RngStream(seed_, phase_, step, 0);
  }
  // Same seed/phase/step, new particle index.
  RngStream fork(std::uint64_t particle) const {
    return RngStream(seed_, phase_, step_, particle);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t phase() const { return phase_; }
  std::uint64_t step() const { return step_; }
  std::uint64_t particle() const { return particle_; }

  // Uniform on [0, 1).
  double uniform();
  // Standard normal (Box-Muller; two uniforms per draw).
  double normal();
  Vector normals(int n);

 private:
  std::uint64_t seed_, phase_, step_, particle_;
  std::mt19937_64 engine_;
};

}  // namespace dassim
