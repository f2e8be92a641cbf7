#pragma once

#include <functional>

#include "dassim/problem.hpp"
#include "dassim/rng.hpp"
#include "dassim/sampling.hpp"
#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim::particle {

using sampling::WeightedEnsemble;

// One filter step returns both views of the filtered distribution: the
// equal-weight ensemble after multinomial resampling, and the ensemble that
// carried the step's normalized weights just before resampling (a lower
// variance estimator, and the carrier of weight diagnostics). For bpf_step
// and opf_step the weighted ensemble holds the propagated particles; for
// gopf_step it holds the current-step particles, because there resampling
// precedes propagation.
struct StepResult {
  WeightedEnsemble posterior;
  WeightedEnsemble weighted;
};

// 1 / sum w_n^2 for normalized weights; ranges from 1 (one-hot) to N
// (uniform). Diagnostic only, never gates execution.
double effective_sample_size(const Vector& weights);

// Bootstrap step: propagate v = Psi(v) + xi with xi ~ N(0, Sigma), weight by
// exp(-1/2 |y - observe(v)|^2_Gamma), normalize in log space, resample.
// Particle n's noise comes from rng.fork(n) and the resampling uniforms from
// rng.fork(N), so results do not depend on evaluation order. Throws
// NumericalError ("weight collapse") when every log-weight is -inf.
StepResult bpf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                    const std::function<Vector(const Vector&)>& observe,
                    const Vector& y, const RngStream& rng);

// Same step with the model's linear observation map, observe(v) = H v.
StepResult bpf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                    const Vector& y, const RngStream& rng);

// Gain, analysis covariance, and weight covariance of the optimal proposal
// for linear observations: conditional on v_j and y_{j+1}, the next state is
// N((I - KH) Psi(v_j) + K y_{j+1}, C) and the incremental weight density is
// N(H Psi(v_j), S) evaluated at y_{j+1}.
struct OpfKernel {
  Matrix K;     // Sigma H^T S^-1, d x k
  SpdMatrix C;  // (I - KH) Sigma
  SpdMatrix S;  // H Sigma H^T + Gamma
};

// Builds the kernel and cross-checks C against its precision form
// C^-1 = H^T Gamma^-1 H + Sigma^-1; a violation beyond 1e-10 (scaled)
// throws NumericalError.
OpfKernel opf_kernel(const SpdMatrix& sigma, const Matrix& h,
                     const SpdMatrix& gamma);

// Optimal-proposal step for linear observations. The unnormalized weight
// exp(-1/2 |y - H Psi(v)|^2_S) of each particle is a function of the current
// state only and is computed before any propagation noise is drawn, so
// redrawing the noise never changes the weights. Propagation then moves each
// particle to (I - KH) Psi(v) + K y + zeta with zeta ~ N(0, C) from
// rng.fork(n), and the propagated particles are resampled.
StepResult opf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                    const Vector& y, const OpfKernel& kernel,
                    const RngStream& rng);

// Gaussianized variant: same weights as opf_step, but the current particles
// are resampled first and the survivors are then propagated through the same
// data-informed map. With one particle this reproduces opf_step exactly.
StepResult gopf_step(const WeightedEnsemble& ens, const NonlinearModel& model,
                     const Vector& y, const OpfKernel& kernel,
                     const RngStream& rng);

}  // namespace dassim::particle
