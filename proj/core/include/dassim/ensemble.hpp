#pragma once

#include "dassim/gaussian.hpp"
#include "dassim/problem.hpp"
#include "dassim/rng.hpp"
#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim::ensemble {

// 1/N-normalized sample mean and covariance (never 1/(N-1)): the covariance
// of the empirical measure itself.
struct EmpiricalMoments {
  Vector mean;
  Matrix cov;  // symmetric, PSD up to roundoff (eigenvalues >= -1e-10)
};

EmpiricalMoments empirical_moments(const Matrix& members);

// Extended Kalman step: linearized predict
//   mhat = Psi(m), Chat = DPsi(m) C DPsi(m)^T + Sigma
// followed by the exact gain-form analysis. Requires an explicit Jacobian;
// there is no finite-difference fallback.
Gaussian exkf_step(const Gaussian& post, const NonlinearModel& model,
                   const Vector& y);

// Propagates each row n through Psi and adds N(0, Sigma) noise drawn from
// the per-particle substream rng.fork(n). The parent stream is not consumed.
// Callers must pass distinct parent streams to predict and analysis within
// one assimilation step (e.g. keyed by different step indices).
Matrix enkf_predict(const Matrix& members, const NonlinearModel& model,
                    const RngStream& rng);

// Perturbed-observation analysis: K = Chat H^T (H Chat H^T + Gamma)^{-1}
// from the 1/N ensemble moments; member n is updated against
// y^(n) = y + s * eta_n with eta_n ~ N(0, Gamma) from rng.fork(n).
// s = 0 gives the deterministic (spread-collapsing) variant.
Matrix enkf_analysis(const Matrix& members, const Matrix& h,
                     const SpdMatrix& gamma, const Vector& y,
                     const RngStream& rng, int s = 1);

// Same analysis computed member-wise in the N-dimensional ensemble span:
// minimizes, over coefficients b,
//   0.5 |y^(n) - H vhat^(n) - (1/N) sum_m b_m H(vhat^(m) - mhat)|^2_Gamma
//   + (1/2N) |b|^2
// and reconstructs v = vhat^(n) + (1/N) sum_m b_m (vhat^(m) - mhat).
// With identical rng draws this coincides with enkf_analysis exactly.
Matrix enkf_analysis_subspace(const Matrix& members, const Matrix& h,
                              const SpdMatrix& gamma, const Vector& y,
                              const RngStream& rng, int s = 1);

}  // namespace dassim::ensemble
