#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dassim/kalman.hpp"
#include "dassim/problem.hpp"
#include "dassim/rng.hpp"
#include "dassim/types.hpp"

namespace dassim::models {

// Forward-Euler discretization of dx/dt = F(x; u) with x(0) = 0 on [0, 1]:
// the discrete forward map is G_delta(u) = X_L with step delta = 1/L.
struct OdeForwardModel {
  std::function<Vector(const Vector&, const Vector&)> F;  // (x, u) -> dx/dt
  int L;
  int dim_x;
  int dim_u;

  OdeForwardModel(std::function<Vector(const Vector&, const Vector&)> rhs,
                  int steps, int state_dim, int param_dim);
};

// X_L from X_0 = 0 with delta = 1/L (or 1/l_override). Throws NumericalError
// when the state stops being finite.
Vector euler_forward(const OdeForwardModel& model, const Vector& u,
                     std::optional<int> l_override = {});

// A simulated truth path and its noisy observations.
struct SyntheticRun {
  Matrix truth;  // (J+1) x d, row 0 drawn from the initial Gaussian
  Matrix data;   // J x k, row j observes truth row j+1
  std::uint64_t seed;
};

// Rolls truth from an initial draw (rng.at_step(0)) and observes it with
// N(0, Gamma) noise. Step j >= 1 draws dynamics noise from
// rng.at_step(j).fork(0) and observation noise from rng.at_step(j).fork(1),
// so the observation noise realization is shared between noisy and
// noise-free-dynamics runs of the same seed.
SyntheticRun simulate(const kalman::LinearModel& model, int j_steps,
                      const RngStream& rng, bool noise_free_dynamics = false);
SyntheticRun simulate(const NonlinearModel& model, int j_steps,
                      const RngStream& rng, bool noise_free_dynamics = false);

// A named, fully frozen test problem. Views are populated according to the
// benchmark kind; linear benchmarks also carry their nonlinear wrapper so
// ensemble and particle methods can run on them directly.
struct BenchmarkProblem {
  std::string name;
  std::optional<kalman::LinearModel> linear;
  std::optional<NonlinearModel> nonlinear;
  std::optional<InverseProblem> inverse;
  std::optional<OdeForwardModel> ode;
  std::optional<Matrix> fixed_gain;  // assimilation gain for 3DVAR benchmarks
};

// Frozen instances:
//   "scalar-lg"         M = H = Sigma = Gamma = C0 = 1, m0 = 0
//   "vector-lg-d4k2"    stable 4-state / 2-observation linear-Gaussian system
//   "contractive-3dvar" Psi(v) = 0.9 sin v, H = 1, Gamma = 0.01, gain K = 0.5
//                       (|(1 - KH) DPsi| <= 0.45, a contraction)
//   "logistic-nl"       Psi(v) = tanh v, Sigma = 0.25, Gamma = 0.01
//   "ode-inverse"       G(u) = euler_forward of dx/dt = -x + u, L = 32,
//                       prior N(0, 1), noise 0.01, datum y = 0.4
// Unknown names raise an error listing the valid names.
BenchmarkProblem make_benchmark(const std::string& name);

const std::vector<std::string>& benchmark_names();

}  // namespace dassim::models
