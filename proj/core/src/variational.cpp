#include "dassim/variational.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dassim/core_ops.hpp"
#include "dassim/error.hpp"
#include "dassim/rng.hpp"

namespace dassim::variational {
namespace {

constexpr double kFdScale = 1e-6;

bool finite(double x) { return std::isfinite(x); }

Matrix roll_forward(const NonlinearModel& model, const Vector& v0,
                    long n_steps) {
  Matrix traj(n_steps + 1, v0.size());
  traj.row(0) = v0.transpose();
  Vector v = v0;
  for (long j = 0; j < n_steps; ++j) {
    v = model.psi(v);
    traj.row(j + 1) = v.transpose();
  }
  return traj;
}

Vector flatten(const Matrix& m) {
  Vector x(m.size());
  for (long j = 0; j < m.rows(); ++j)
    x.segment(j * m.cols(), m.cols()) = m.row(j).transpose();
  return x;
}

Matrix unflatten(const Vector& x, long rows, long cols) {
  Matrix m(rows, cols);
  for (long j = 0; j < rows; ++j)
    m.row(j) = x.segment(j * cols, cols).transpose();
  return m;
}

void check_w4dvar_shapes(const Matrix& traj, const NonlinearModel& model,
                         const Matrix& data) {
  if (data.rows() < 1)
    throw std::invalid_argument("variational smoothing requires nonempty data");
  if (data.cols() != model.obs_dim())
    throw std::invalid_argument("data has wrong observation dimension");
  if (traj.rows() != data.rows() + 1 || traj.cols() != model.state_dim())
    throw std::invalid_argument("trajectory shape must be (J+1) x d");
}

}  // namespace

Vector fd_gradient(const std::function<double(const Vector&)>& f,
                   const Vector& x) {
  const int n = static_cast<int>(x.size());
  Vector g(n);
  Vector xp = x;
  for (int i = 0; i < n; ++i) {
    const double h = kFdScale * (1.0 + std::abs(x(i)));
    xp(i) = x(i) + h;
    double fp = f(xp);
    xp(i) = x(i) - h;
    double fm = f(xp);
    xp(i) = x(i);
    if (finite(fp) && finite(fm)) {
      g(i) = (fp - fm) / (2.0 * h);
    } else if (finite(fp)) {
      g(i) = (fp - f(x)) / h;
    } else if (finite(fm)) {
      g(i) = (f(x) - fm) / h;
    } else {
      g(i) = 0.0;
    }
  }
  return g;
}

DescentResult minimize_descent(
    const std::function<double(const Vector&)>& f, const Vector& x0,
    const DescentOptions& opts,
    const std::function<Vector(const Vector&)>& grad) {
  Vector x = x0;
  double fx = f(x);
  if (!finite(fx))
    throw std::invalid_argument("objective not finite at initial point");
  DescentResult res;
  double warm_step = opts.init_step;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    Vector g = grad ? grad(x) : fd_gradient(f, x);
    const double gn = g.norm();
    res.iterations = iter;
    res.grad_norm = gn;
    if (gn <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    // Armijo backtracking; non-finite candidates are treated as failed steps.
    double t = warm_step;
    bool accepted = false;
    while (t >= opts.min_step) {
      Vector cand = x - t * g;
      double fc = f(cand);
      if (finite(fc) && fc <= fx - opts.armijo_c * t * gn * gn) {
        x = std::move(cand);
        fx = fc;
        accepted = true;
        break;
      }
      t *= opts.shrink;
    }
    if (!accepted) break;  // step collapse: stationary up to line-search scale
    warm_step = 2.0 * t;
  }
  res.minimizer = std::move(x);
  res.value = fx;
  return res;
}

Gain3dvar gain_3dvar(const SpdMatrix& c_hat, const Matrix& h,
                     const SpdMatrix& gamma) {
  if (h.cols() != c_hat.dim())
    throw std::invalid_argument("observation matrix has wrong state dimension");
  if (gamma.dim() != h.rows())
    throw std::invalid_argument("data noise covariance has wrong dimension");
  Matrix s = h * c_hat.matrix() * h.transpose() + gamma.matrix();
  SpdMatrix s_spd(s);
  Matrix gain = s_spd.solve(Matrix(h * c_hat.matrix())).transpose();
  return Gain3dvar{std::move(gain), std::move(s_spd)};
}

Vector step_3dvar(const Vector& m, const Vector& y, const NonlinearModel& model,
                  const Matrix& gain) {
  if (m.size() != model.state_dim() || y.size() != model.obs_dim() ||
      gain.rows() != model.state_dim() || gain.cols() != model.obs_dim())
    throw std::invalid_argument("dimension mismatch in 3DVAR step");
  Vector forecast = model.psi(m);
  return forecast + gain * (y - model.H * forecast);
}

Matrix run_3dvar(const NonlinearModel& model, const Matrix& data,
                 const Matrix& gain) {
  if (data.cols() != model.obs_dim())
    throw std::invalid_argument("data has wrong observation dimension");
  Matrix means(data.rows() + 1, model.state_dim());
  means.row(0) = model.init.mean.transpose();
  Vector m = model.init.mean;
  for (long j = 0; j < data.rows(); ++j) {
    m = step_3dvar(m, data.row(j).transpose(), model, gain);
    means.row(j + 1) = m.transpose();
  }
  return means;
}

double w4dvar_objective(const Matrix& traj, const NonlinearModel& model,
                        const Matrix& data) {
  check_w4dvar_shapes(traj, model, data);
  const long big_j = data.rows();
  double obj = 0.5 * weighted_sq_norm(
                         model.init.cov,
                         Vector(traj.row(0).transpose() - model.init.mean));
  for (long j = 0; j < big_j; ++j) {
    Vector e = traj.row(j + 1).transpose() -
               model.psi(traj.row(j).transpose());
    obj += 0.5 * weighted_sq_norm(model.Sigma, e);
    Vector d = data.row(j).transpose() -
               model.H * traj.row(j + 1).transpose();
    obj += 0.5 * weighted_sq_norm(model.Gamma, d);
  }
  return obj;
}

Matrix w4dvar_gradient(const Matrix& traj, const NonlinearModel& model,
                       const Matrix& data) {
  check_w4dvar_shapes(traj, model, data);
  const long big_j = data.rows();
  const int d = model.state_dim();
  if (!model.has_jacobian()) {
    auto obj = [&](const Vector& x) {
      return w4dvar_objective(unflatten(x, big_j + 1, d), model, data);
    };
    return unflatten(fd_gradient(obj, flatten(traj)), big_j + 1, d);
  }
  // Residuals e_j = v_{j+1} - Psi(v_j) and data misfits d_j = y_j - H v_j.
  std::vector<Vector> sinv_e(big_j);
  for (long j = 0; j < big_j; ++j) {
    Vector e = traj.row(j + 1).transpose() -
               model.psi(traj.row(j).transpose());
    sinv_e[j] = model.Sigma.solve(e);
  }
  Matrix grad(big_j + 1, d);
  grad.row(0) =
      (model.init.cov.solve(
           Vector(traj.row(0).transpose() - model.init.mean)) -
       model.jacobian_psi(traj.row(0).transpose()).transpose() * sinv_e[0])
          .transpose();
  for (long j = 1; j <= big_j; ++j) {
    Vector g = sinv_e[j - 1];
    if (j < big_j)
      g -= model.jacobian_psi(traj.row(j).transpose()).transpose() *
           sinv_e[j];
    Vector misfit = data.row(j - 1).transpose() -
                    model.H * traj.row(j).transpose();
    g -= model.H.transpose() * model.Gamma.solve(misfit);
    grad.row(j) = g.transpose();
  }
  return grad;
}

W4dvarResult w4dvar_minimize(const NonlinearModel& model, const Matrix& data,
                             const Matrix& init_traj,
                             const DescentOptions& opts) {
  check_w4dvar_shapes(init_traj, model, data);
  const long big_j = data.rows();
  const int d = model.state_dim();
  auto obj = [&](const Vector& x) {
    return w4dvar_objective(unflatten(x, big_j + 1, d), model, data);
  };
  auto grad = [&](const Vector& x) {
    return flatten(w4dvar_gradient(unflatten(x, big_j + 1, d), model, data));
  };
  DescentResult dres = minimize_descent(obj, flatten(init_traj), opts, grad);
  W4dvarResult res;
  res.trajectory = unflatten(dres.minimizer, big_j + 1, d);
  res.objective = dres.value;
  res.grad_norm = dres.grad_norm;
  res.iterations = dres.iterations;
  res.converged = dres.converged;
  for (long j = 0; j < big_j; ++j) {
    Vector e = res.trajectory.row(j + 1).transpose() -
               model.psi(res.trajectory.row(j).transpose());
    res.max_violation = std::max(res.max_violation, e.norm());
  }
  return res;
}

double strong_4dvar_objective(const Vector& v0, const NonlinearModel& model,
                              const Matrix& data) {
  if (data.rows() < 1)
    throw std::invalid_argument("variational smoothing requires nonempty data");
  if (data.cols() != model.obs_dim())
    throw std::invalid_argument("data has wrong observation dimension");
  if (v0.size() != model.state_dim())
    throw std::invalid_argument("initial state has wrong dimension");
  double obj = 0.5 * weighted_sq_norm(model.init.cov, v0 - model.init.mean);
  Vector v = v0;
  for (long j = 0; j < data.rows(); ++j) {
    v = model.psi(v);
    obj += 0.5 * weighted_sq_norm(model.Gamma,
                                  Vector(data.row(j).transpose() - model.H * v));
  }
  return obj;
}

Strong4dvarResult strong_4dvar_minimize(const NonlinearModel& model,
                                        const Matrix& data,
                                        const Vector& init_v0,
                                        const DescentOptions& opts) {
  if (data.rows() < 1)
    throw std::invalid_argument("variational smoothing requires nonempty data");
  const long big_j = data.rows();
  auto obj = [&](const Vector& v0) {
    return strong_4dvar_objective(v0, model, data);
  };
  std::function<Vector(const Vector&)> grad;
  if (model.has_jacobian()) {
    // Reverse accumulation of sum_j P_j^T H^T Gamma^{-1} d_j with
    // P_j the Jacobian of v_j with respect to v_0.
    grad = [&](const Vector& v0) {
      std::vector<Vector> states(big_j + 1);
      std::vector<Matrix> jacs(big_j + 1);
      states[0] = v0;
      for (long j = 1; j <= big_j; ++j) {
        jacs[j] = model.jacobian_psi(states[j - 1]);
        states[j] = model.psi(states[j - 1]);
      }
      Vector s = Vector::Zero(v0.size());
      for (long j = big_j; j >= 1; --j) {
        Vector q = model.H.transpose() *
                   model.Gamma.solve(
                       Vector(data.row(j - 1).transpose() - model.H * states[j]));
        s = jacs[j].transpose() * (q + s);
      }
      return Vector(model.init.cov.solve(Vector(v0 - model.init.mean)) - s);
    };
  }
  DescentResult dres = minimize_descent(obj, init_v0, opts, grad);
  Strong4dvarResult res;
  res.v0 = dres.minimizer;
  res.trajectory = roll_forward(model, res.v0, big_j);
  res.objective = dres.value;
  res.iterations = dres.iterations;
  res.converged = dres.converged;
  return res;
}

MapResult map_estimate(const InverseProblem& problem, const Vector& y,
                       const Vector& init, const DescentOptions& opts) {
  if (init.size() != problem.dim)
    throw std::invalid_argument("initial point has wrong dimension");
  if (y.size() != problem.noise_cov.dim())
    throw std::invalid_argument("data has wrong dimension");
  auto obj = [&](const Vector& u) {
    double lp = problem.log_prior(u);
    if (!finite(lp)) return std::numeric_limits<double>::infinity();
    return problem.misfit(u, y) - lp;
  };
  DescentResult dres = minimize_descent(obj, init, opts);
  return MapResult{dres.minimizer, dres.value, dres.iterations,
                   dres.converged};
}

namespace {

// Lower-triangular factor parameterization: theta = (mu, ell) with ell the
// row-major lower triangle and log-transformed diagonal, so Sigma = T T^T is
// SPD for every unconstrained theta.
struct ThetaLayout {
  int dim;
  int size() const { return dim + dim * (dim + 1) / 2; }

  Vector mu(const Vector& theta) const { return theta.head(dim); }

  Matrix factor(const Vector& theta) const {
    Matrix t = Matrix::Zero(dim, dim);
    int k = dim;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j, ++k)
        t(i, j) = (i == j) ? std::exp(theta(k)) : theta(k);
    return t;
  }

  double log_det_sigma_half(const Vector& theta) const {
    double s = 0.0;
    int k = dim;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j, ++k)
        if (i == j) s += theta(k);
    return s;
  }

  Vector pack(const Vector& mu, const Matrix& t) const {
    Vector theta(size());
    theta.head(dim) = mu;
    int k = dim;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j, ++k)
        theta(k) = (i == j) ? std::log(t(i, j)) : t(i, j);
    return theta;
  }
};

// Panel of draws with exact zero mean and identity covariance: centers the
// raw normals and whitens by the Cholesky factor of their sample covariance.
Matrix whitened_panel(RngStream rng, int panel_size, int dim) {
  Matrix z(panel_size, dim);
  for (int p = 0; p < panel_size; ++p)
    for (int i = 0; i < dim; ++i) z(p, i) = rng.normal();
  z.rowwise() -= z.colwise().mean();
  Matrix s = z.transpose() * z / static_cast<double>(panel_size);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericalError("degenerate panel in gaussian fit");
  return llt.matrixL().solve(z.transpose()).transpose();
}

}  // namespace

Gaussian gaussian_fit_klpq(const std::function<double(const Vector&)>& loss,
                           double lambda, int dim,
                           const GaussianFitOptions& opts) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("prior precision lambda must be positive");
  if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
  if (opts.panel_size <= dim + 1)
    throw std::invalid_argument("panel size must exceed dimension + 1");
  ThetaLayout layout{dim};
  RngStream root(opts.seed, 0xF17);

  auto objective_on = [&](const Matrix& panel) {
    return [&layout, &loss, lambda, panel](const Vector& theta) {
      Vector mu = layout.mu(theta);
      Matrix t = layout.factor(theta);
      double mean_loss = 0.0;
      for (long p = 0; p < panel.rows(); ++p) {
        double l = loss(Vector(mu + t * panel.row(p).transpose()));
        if (!std::isfinite(l))
          return std::numeric_limits<double>::infinity();
        mean_loss += l;
      }
      mean_loss /= static_cast<double>(panel.rows());
      return mean_loss + 0.5 * lambda * mu.squaredNorm() +
             0.5 * lambda * t.squaredNorm() -
             layout.log_det_sigma_half(theta);
    };
  };

  Matrix eval_panel = whitened_panel(root.fork(1000), opts.panel_size, dim);
  auto eval_obj = objective_on(eval_panel);

  DescentOptions inner = opts.descent;
  inner.max_iters = opts.inner_iters;

  Vector best_theta;
  double best_score = std::numeric_limits<double>::infinity();
  for (int start = 0; start < opts.starts; ++start) {
    Vector mu0 = Vector::Zero(dim);
    Matrix t0 = (1.0 / std::sqrt(lambda)) * Matrix::Identity(dim, dim);
    if (start > 0) {
      RngStream srng = root.fork(start);
      for (int i = 0; i < dim; ++i)
        mu0(i) = srng.normal() / std::sqrt(lambda);
      t0 *= std::exp(0.3 * srng.normal());
    }
    Vector theta = layout.pack(mu0, t0);
    for (int round = 0; round < opts.outer_rounds; ++round) {
      Matrix panel =
          whitened_panel(root.at_step(round + 1).fork(start), opts.panel_size,
                         dim);
      theta = minimize_descent(objective_on(panel), theta, inner).minimizer;
    }
    double score = eval_obj(theta);
    if (score < best_score) {
      best_score = score;
      best_theta = theta;
    }
  }
  if (!finite(best_score))
    throw NumericalError("gaussian fit objective not finite at any start");
  Matrix t = layout.factor(best_theta);
  Matrix sigma = t * t.transpose();
  return Gaussian(layout.mu(best_theta),
                  SpdMatrix(0.5 * (sigma + sigma.transpose())));
}

Gaussian gaussian_fit_moment_match(const Matrix& samples,
                                   const Vector& weights) {
  const long n = samples.rows();
  if (n < 2) throw std::invalid_argument("moment matching needs N >= 2 samples");
  Vector w;
  if (weights.size() == 0) {
    w = Vector::Constant(n, 1.0 / static_cast<double>(n));
  } else {
    if (weights.size() != n)
      throw std::invalid_argument("weights and samples count differ");
    if (weights.minCoeff() < 0.0)
      throw std::invalid_argument("weights must be nonnegative");
    double s = weights.sum();
    if (!(s > 0.0)) throw std::invalid_argument("weights sum to zero");
    w = weights / s;
  }
  Vector mean = samples.transpose() * w;
  Matrix centered = samples.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * w.asDiagonal() * centered;
  return Gaussian(std::move(mean), SpdMatrix(0.5 * (cov + cov.transpose())));
}

}  // namespace dassim::variational
