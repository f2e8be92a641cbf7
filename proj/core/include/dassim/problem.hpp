#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>

#include "dassim/core_ops.hpp"
#include "dassim/gaussian.hpp"
#include "dassim/spd_matrix.hpp"
#include "dassim/types.hpp"

namespace dassim {

// Stochastic dynamics with linear observations:
//   v_{j+1} = Psi(v_j) + xi_j,   xi ~ N(0, Sigma)
//   y_{j+1} = H v_{j+1} + eta_{j+1},   eta ~ N(0, Gamma)
// jacobian_psi may be left empty; methods that need it check has_jacobian().
struct NonlinearModel {
  std::function<Vector(const Vector&)> psi;
  std::function<Matrix(const Vector&)> jacobian_psi;
  Matrix H;
  SpdMatrix Sigma;
  SpdMatrix Gamma;
  Gaussian init;

  NonlinearModel(std::function<Vector(const Vector&)> psi_fn,
                 std::function<Matrix(const Vector&)> jac_fn, Matrix h,
                 SpdMatrix sigma, SpdMatrix gamma, Gaussian init_state)
      : psi(std::move(psi_fn)),
        jacobian_psi(std::move(jac_fn)),
        H(std::move(h)),
        Sigma(std::move(sigma)),
        Gamma(std::move(gamma)),
        init(std::move(init_state)) {
    if (!psi) throw std::invalid_argument("dynamics map must be set");
    const int d = init.dim();
    if (H.cols() != d)
      throw std::invalid_argument(
          "observation matrix has wrong state dimension");
    if (Sigma.dim() != d)
      throw std::invalid_argument("model noise covariance has wrong dimension");
    if (Gamma.dim() != static_cast<int>(H.rows()))
      throw std::invalid_argument("data noise covariance has wrong dimension");
  }

  int state_dim() const { return init.dim(); }
  int obs_dim() const { return static_cast<int>(H.rows()); }
  bool has_jacobian() const { return static_cast<bool>(jacobian_psi); }
};

// Inverse problem y = G(u) + eta, eta ~ N(0, noise_cov), with prior given by
// its log density (up to an additive constant; -inf outside the support).
// gaussian_prior is set when the prior is Gaussian, enabling methods that
// need it structurally (pCN, ensemble inversion, tempered sampling).
struct InverseProblem {
  std::function<Vector(const Vector&)> forward;
  std::function<double(const Vector&)> log_prior;
  SpdMatrix noise_cov;
  int dim;
  Vector data;
  std::optional<Gaussian> gaussian_prior;

  InverseProblem(std::function<Vector(const Vector&)> g,
                 std::function<double(const Vector&)> log_prior_fn,
                 SpdMatrix gamma, int state_dim, Vector y)
      : forward(std::move(g)),
        log_prior(std::move(log_prior_fn)),
        noise_cov(std::move(gamma)),
        dim(state_dim),
        data(std::move(y)) {
    if (!forward) throw std::invalid_argument("forward map must be set");
    if (!log_prior) throw std::invalid_argument("log prior must be set");
    if (dim < 1) throw std::invalid_argument("state dimension must be >= 1");
    if (data.size() != noise_cov.dim())
      throw std::invalid_argument("data and noise covariance dimensions differ");
  }

  static InverseProblem with_gaussian_prior(
      std::function<Vector(const Vector&)> g, SpdMatrix gamma, Vector y,
      Gaussian prior) {
    Gaussian prior_copy = prior;
    auto log_prior_fn = [prior_copy](const Vector& u) {
      return gaussian_logpdf(u, prior_copy);
    };
    InverseProblem prob(std::move(g), std::move(log_prior_fn),
                        std::move(gamma), prior.dim(), std::move(y));
    prob.gaussian_prior = std::move(prior);
    return prob;
  }

  // 0.5 |y - G(u)|^2 in the noise_cov metric.
  double misfit(const Vector& u, const Vector& y) const {
    return 0.5 * weighted_sq_norm(noise_cov, y - forward(u));
  }
  double misfit(const Vector& u) const { return misfit(u, data); }
};

}  // namespace dassim
