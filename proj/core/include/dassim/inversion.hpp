#pragma once

#include <functional>
#include <vector>

#include "dassim/problem.hpp"
#include "dassim/rng.hpp"
#include "dassim/sampling.hpp"
#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim::inversion {

using sampling::WeightedEnsemble;

// Uniform tempering ladder from the prior (temperature 0) to the posterior
// (temperature 1) in J moves of size h = 1/J.
struct TemperingSchedule {
  int J;
  double h;
  explicit TemperingSchedule(int steps);
};

// Parameter ensemble for derivative-free inversion; rows are members.
struct EkiState {
  Matrix members;
  int step = 0;
};

using ForwardMap = std::function<Vector(const Vector&)>;

// One ensemble inversion update
//   u += C^{uw} (C^{ww} + Gamma)^{-1} (y^{(n)} - G(u))
// with 1/N joint statistics of (u, G(u)); only a data-space system is ever
// solved. With perturb set, member n sees y + N(0, Gamma) noise drawn from
// rng.fork(n); the default of the callers is unperturbed.
EkiState eki_step(const EkiState& state, const ForwardMap& forward,
                  const SpdMatrix& gamma, const Vector& y, bool perturb,
                  const RngStream& rng);

struct EkiRun {
  std::vector<EkiState> trajectory;  // steps + 1 states, first is the input
  Vector mean_misfit;  // per state, mean over members of 1/2 |y - G(u)|^2
};

// Iterates eki_step, recording the per-step mean data misfit. The iteration
// acting on a state with index s draws from rng.at_step(s + 1).
EkiRun eki_run(const EkiState& init, const ForwardMap& forward,
               const SpdMatrix& gamma, const Vector& y, int steps,
               bool perturb, const RngStream& rng);

// Right-hand side of the continuous-time ensemble flow
//   du^{(n)}/dt = -(1/N) sum_m <G(u^{(n)}) - y, G(u^{(m)}) - Gbar>_{Gamma0}
//                 u^{(m)}.
// For a linear forward map this equals the preconditioned gradient flow
// -C(u) grad L0(u^{(n)}) member by member.
Matrix eki_ode_rhs(const Matrix& members, const ForwardMap& forward,
                   const Vector& y, const SpdMatrix& gamma0);

struct OdeTrajectory {
  std::vector<Matrix> states;  // ensembles at times 0, h, 2h, ...
  Matrix member_loss;          // (steps+1) x N values 1/2 |y - G(u)|^2
  Vector times;
};

// Fixed-step explicit Euler integration of the ensemble flow over
// [0, t_end]. Throws NumericalError when the state stops being finite
// (step too large).
OdeTrajectory eki_ode_integrate(const Matrix& init, const ForwardMap& forward,
                                const Vector& y, const SpdMatrix& gamma0,
                                double step_h, double t_end);

// Log of a single tempering reweight, -h L0(u); the J increments telescope
// exactly to the full data log-likelihood -L0(u).
double tempered_log_increment(const InverseProblem& problem,
                              const TemperingSchedule& schedule,
                              const Vector& u);

// Per-temperature diagnostics of one smc_sample run.
struct SmcTrace {
  Matrix mean;  // (J+1) x dim: prior-draw mean, then after each temperature
  Vector ess;   // J entries: effective sample size of temperature j's weights
};

// Prior-to-posterior particle sampler. Members start as prior draws
// (rng.at_step(0)); each temperature j = 1..J reweights by exp(-h L0),
// resamples (uniforms from rng.at_step(j).fork(N)), then applies
// mutation_steps pCN moves per member (member n's chain draws from
// rng.at_step(j).fork(n)) that leave exp(-j h L0) x prior invariant.
// Requires a Gaussian prior; beta in (0, 1]. Throws NumericalError naming
// the temperature when every weight collapses. A non-null trace receives
// per-temperature means and effective sample sizes; it never affects the
// draw sequence.
WeightedEnsemble smc_sample(const InverseProblem& problem,
                            const TemperingSchedule& schedule, int n,
                            int mutation_steps, double beta,
                            const RngStream& rng, SmcTrace* trace = nullptr);

}  // namespace dassim::inversion
