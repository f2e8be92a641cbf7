#pragma once

#include <vector>

#include "dassim/gaussian.hpp"
#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim::kalman {

// Linear-Gaussian state-space model
//   v_{j+1} = M v_j + xi_j,    xi ~ N(0, Sigma)
//   y_{j+1} = H v_{j+1} + eta_{j+1},  eta ~ N(0, Gamma)
// with v_0 ~ init.
struct LinearModel {
  Matrix M;
  Matrix H;
  SpdMatrix Sigma;
  SpdMatrix Gamma;
  Gaussian init;

  LinearModel(Matrix m, Matrix h, SpdMatrix sigma, SpdMatrix gamma,
              Gaussian init_state);

  int state_dim() const { return static_cast<int>(M.rows()); }
  int obs_dim() const { return static_cast<int>(H.rows()); }
};

// Symmetrizes and floors eigenvalues at 1e-12 before wrapping; used for
// covariances assembled from products that can pick up roundoff asymmetry.
SpdMatrix floored_covariance(Matrix c);

// (M m, M C M^T + Sigma).
Gaussian kf_predict(const Gaussian& post, const LinearModel& model);

// Precision-form update: C^{-1} = Chat^{-1} + H^T Gamma^{-1} H and
// C^{-1} m = Chat^{-1} mhat + H^T Gamma^{-1} y, resolved by one SPD solve
// of the assembled precision.
Gaussian kf_update_precision(const Gaussian& pred, const Matrix& h,
                             const SpdMatrix& gamma, const Vector& y);

struct GainUpdate {
  Gaussian post;
  Matrix gain;        // K = Chat H^T S^{-1}
  Vector innovation;  // y - H mhat
};

// Gain-form update with S = H Chat H^T + Gamma inverted in data space only;
// posterior covariance (I - K H) Chat, symmetrized.
GainUpdate kf_update_gain(const Gaussian& pred, const Matrix& h,
                          const SpdMatrix& gamma, const Vector& y);

struct FilterTrace {
  std::vector<Gaussian> predicted;   // j = 1..J
  std::vector<Gaussian> updated;     // j = 0 (init), 1..J
  std::vector<Matrix> gains;         // j = 1..J
  std::vector<Vector> innovations;   // j = 1..J
};

// Alternates kf_predict / kf_update_gain over the data rows y_1..y_J.
FilterTrace kalman_filter(const LinearModel& model, const Matrix& data);

struct SmootherResult {
  Matrix means;                           // (J+1) x d, rows v_0..v_J
  std::vector<Matrix> block_precisions;   // forward-eliminated Schur blocks
};

// Gaussian smoother via the block-tridiagonal precision system
//   Omega_00   = C0^{-1} + M^T Sigma^{-1} M
//   Omega_jj   = Sigma^{-1} + M^T Sigma^{-1} M + H^T Gamma^{-1} H, 0 < j < J
//   Omega_JJ   = Sigma^{-1} + H^T Gamma^{-1} H
//   Omega_j,j+1 = -M^T Sigma^{-1}
//   r_0 = C0^{-1} m_0,  r_j = H^T Gamma^{-1} y_j
// solved by Schur-complement forward elimination and back-substitution.
SmootherResult kalman_smoother(const LinearModel& model, const Matrix& data);

struct SmootherSystem {
  Matrix omega;  // dense (J+1)d x (J+1)d precision
  Vector r;
};

// Dense assembly of the smoothing system; the covariance interface for
// callers that need the full posterior precision.
SmootherSystem assemble_smoother_system(const LinearModel& model,
                                        const Matrix& data);

}  // namespace dassim::kalman
