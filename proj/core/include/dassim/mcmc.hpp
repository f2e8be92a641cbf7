#pragma once

#include <functional>

#include "dassim/rng.hpp"
#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim::mcmc {

// Unnormalized log target; may return -inf outside the support.
struct TargetDensity {
  std::function<double(const Vector&)> log_unnormalized;
};

// Proposal sampler with transition log-density q(from, to). When symmetric
// is set the log density is never consulted.
struct ProposalKernel {
  std::function<Vector(const Vector&, RngStream&)> sample;
  std::function<double(const Vector&, const Vector&)> log_density;
  bool symmetric = false;
};

struct StepResult {
  Vector state;
  bool accepted = false;
};

// One Metropolis-Hastings step with log-space acceptance. A uniform is
// drawn on every call, including certain accepts and rejects, so rejected
// steps keep the stream aligned. Errors when the target is -inf at `state`.
StepResult mh_step(const Vector& state, const TargetDensity& target,
                   const ProposalKernel& proposal, RngStream& rng);

// Preconditioned Crank-Nicolson step for targets g(u) * N(0, prior_cov)
// restricted to `support`: proposes sqrt(1-beta^2) u + beta xi with
// xi ~ N(0, prior_cov) and accepts with min(1, g(v)/g(u) * 1_B(v)). The
// support indicator is checked before log_g is evaluated; the uniform is
// drawn on every call. beta must lie in (0, 1].
StepResult pcn_step(const Vector& state, const SpdMatrix& prior_cov,
                    double beta, const std::function<double(const Vector&)>& log_g,
                    const std::function<bool(const Vector&)>& support,
                    RngStream& rng);

struct ChainResult {
  Matrix samples;  // one row per step, post-move states
  double acceptance_rate = 0.0;
};

ChainResult run_chain(
    const Vector& init,
    const std::function<StepResult(const Vector&, RngStream&)>& step,
    int n_steps, RngStream& rng);

// Row-stochastic transition kernel on finitely many states.
class FiniteChain {
 public:
  explicit FiniteChain(Matrix p);
  int states() const { return static_cast<int>(p_.rows()); }
  const Matrix& kernel() const { return p_; }

 private:
  Matrix p_;
};

// Metropolis-Hastings kernel for a strictly positive proposal matrix and
// strictly positive target: p(u,v) = q(u,v) min(1, pi_v q(v,u) / pi_u q(u,v))
// off the diagonal, with the leftover mass on the diagonal.
FiniteChain finite_mh_kernel(const Matrix& proposal, const Vector& target);

struct TvDecay {
  // tv_seq[k] = d_TV(pi0 P^{k+1}, invariant), k = 0..n-1.
  Vector tv_seq;
  double epsilon = 0.0;  // min kernel entry
  Vector invariant;
};

// Power iteration to the invariant distribution (1e-12 fixed-point residual,
// at most 1e5 sweeps; errors when non-convergent, e.g. periodic kernels),
// then the total-variation decay of pi0 under repeated application.
TvDecay finite_tv_decay(const FiniteChain& chain, const Vector& pi0, int n);

}  // namespace dassim::mcmc
