#include "dassim/inversion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "dassim/core_ops.hpp"
#include "dassim/error.hpp"
#include "dassim/mcmc.hpp"

namespace dassim::inversion {

namespace {

// Evaluates the forward map on every row, validating the output dimension.
Matrix forward_values(const Matrix& members, const ForwardMap& forward,
                      int k) {
  Matrix g_vals(members.rows(), k);
  for (int i = 0; i < members.rows(); ++i) {
    Vector gi = forward(members.row(i).transpose());
    if (gi.size() != k)
      throw std::invalid_argument("forward map output has wrong dimension");
    g_vals.row(i) = gi.transpose();
  }
  return g_vals;
}

Vector ensemble_losses(const Matrix& members, const ForwardMap& forward,
                       const Vector& y, const SpdMatrix& gamma) {
  Vector losses(members.rows());
  for (int i = 0; i < members.rows(); ++i)
    losses(i) = 0.5 * weighted_sq_norm(
                          gamma, Vector(y - forward(members.row(i).transpose())));
  return losses;
}

}  // namespace

TemperingSchedule::TemperingSchedule(int steps) : J(steps), h(1.0 / steps) {
  if (steps < 1)
    throw std::invalid_argument("schedule needs at least one step");
}

EkiState eki_step(const EkiState& state, const ForwardMap& forward,
                  const SpdMatrix& gamma, const Vector& y, bool perturb,
                  const RngStream& rng) {
  if (!forward) throw std::invalid_argument("forward map must be set");
  const int n = static_cast<int>(state.members.rows());
  const int k = gamma.dim();
  if (n < 1) throw std::invalid_argument("ensemble must be nonempty");
  if (y.size() != k)
    throw std::invalid_argument("datum does not match the data noise");
  Matrix g_vals = forward_values(state.members, forward, k);
  Vector u_bar = state.members.colwise().mean();
  Vector g_bar = g_vals.colwise().mean();
  Matrix u_anom = state.members.rowwise() - u_bar.transpose();
  Matrix g_anom = g_vals.rowwise() - g_bar.transpose();
  Matrix c_uw = u_anom.transpose() * g_anom / n;
  Matrix s_raw = g_anom.transpose() * g_anom / n + gamma.matrix();
  SpdMatrix s{Matrix(0.5 * (s_raw + s_raw.transpose()))};
  const Matrix chol = gamma.chol_lower();
  Matrix out(n, state.members.cols());
  for (int i = 0; i < n; ++i) {
    Vector yn = y;
    if (perturb) yn += chol * rng.fork(i).normals(k);
    Vector resid = yn - g_vals.row(i).transpose();
    out.row(i) =
        state.members.row(i) + (c_uw * s.solve(resid)).transpose();
  }
  return {std::move(out), state.step + 1};
}

EkiRun eki_run(const EkiState& init, const ForwardMap& forward,
               const SpdMatrix& gamma, const Vector& y, int steps,
               bool perturb, const RngStream& rng) {
  if (steps < 1) throw std::invalid_argument("steps must be positive");
  EkiRun run;
  run.trajectory.reserve(steps + 1);
  run.trajectory.push_back(init);
  run.mean_misfit.resize(steps + 1);
  run.mean_misfit(0) =
      ensemble_losses(init.members, forward, y, gamma).mean();
  for (int j = 0; j < steps; ++j) {
    const EkiState& cur = run.trajectory.back();
    run.trajectory.push_back(
        eki_step(cur, forward, gamma, y, perturb, rng.at_step(cur.step + 1)));
    run.mean_misfit(j + 1) =
        ensemble_losses(run.trajectory.back().members, forward, y, gamma)
            .mean();
  }
  return run;
}

Matrix eki_ode_rhs(const Matrix& members, const ForwardMap& forward,
                   const Vector& y, const SpdMatrix& gamma0) {
  if (!forward) throw std::invalid_argument("forward map must be set");
  const int n = static_cast<int>(members.rows());
  if (n < 1) throw std::invalid_argument("ensemble must be nonempty");
  Matrix g_vals = forward_values(members, forward, gamma0.dim());
  Vector g_bar = g_vals.colwise().mean();
  Matrix data_resid = g_vals.rowwise() - y.transpose();
  Matrix g_anom = g_vals.rowwise() - g_bar.transpose();
  // D(n, m) = <G(u_n) - y, G(u_m) - Gbar>_{Gamma0}
  Matrix d_mat = data_resid * gamma0.solve(Matrix(g_anom.transpose()));
  return Matrix(-(d_mat * members) / n);
}

OdeTrajectory eki_ode_integrate(const Matrix& init, const ForwardMap& forward,
                                const Vector& y, const SpdMatrix& gamma0,
                                double step_h, double t_end) {
  if (!(step_h > 0)) throw std::invalid_argument("step size must be positive");
  if (t_end < step_h)
    throw std::invalid_argument("horizon must cover at least one step");
  const int n_steps = static_cast<int>(std::llround(t_end / step_h));
  OdeTrajectory traj;
  traj.states.reserve(n_steps + 1);
  traj.member_loss.resize(n_steps + 1, init.rows());
  traj.times.resize(n_steps + 1);
  traj.states.push_back(init);
  traj.member_loss.row(0) =
      ensemble_losses(init, forward, y, gamma0).transpose();
  traj.times(0) = 0.0;
  for (int s = 1; s <= n_steps; ++s) {
    Matrix next = traj.states.back() +
                  step_h * eki_ode_rhs(traj.states.back(), forward, y, gamma0);
    if (!next.allFinite())
      throw NumericalError("ensemble flow diverged: step too large");
    traj.member_loss.row(s) =
        ensemble_losses(next, forward, y, gamma0).transpose();
    traj.times(s) = s * step_h;
    traj.states.push_back(std::move(next));
  }
  return traj;
}

double tempered_log_increment(const InverseProblem& problem,
                              const TemperingSchedule& schedule,
                              const Vector& u) {
  return -schedule.h * problem.misfit(u);
}

WeightedEnsemble smc_sample(const InverseProblem& problem,
                            const TemperingSchedule& schedule, int n,
                            int mutation_steps, double beta,
                            const RngStream& rng, SmcTrace* trace) {
  if (!problem.gaussian_prior)
    throw std::invalid_argument("tempered sampling requires a Gaussian prior");
  if (n < 1) throw std::invalid_argument("ensemble must be nonempty");
  if (mutation_steps < 0)
    throw std::invalid_argument("mutation step count must be nonnegative");
  if (!(beta > 0.0) || beta > 1.0)
    throw std::invalid_argument("pCN beta must lie in (0, 1]");
  const Gaussian& prior = *problem.gaussian_prior;
  RngStream init_rng = rng.at_step(0);
  Matrix members = sample_gaussian(prior, n, init_rng);
  if (trace) {
    trace->mean.resize(schedule.J + 1, prior.dim());
    trace->ess.resize(schedule.J);
    trace->mean.row(0) = members.colwise().mean();
  }
  const std::function<bool(const Vector&)> always = [](const Vector&) {
    return true;
  };
  for (int j = 1; j <= schedule.J; ++j) {
    Vector log_w(n);
    double max_lw = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      log_w(i) = tempered_log_increment(problem, schedule,
                                        members.row(i).transpose());
      if (std::isnan(log_w(i)))
        throw NumericalError("non-finite log-weight at temperature " +
                             std::to_string(j));
      max_lw = std::max(max_lw, log_w(i));
    }
    if (!std::isfinite(max_lw))
      throw NumericalError("weight collapse at temperature " +
                           std::to_string(j));
    Vector w = (log_w.array() - max_lw).exp();
    w /= w.sum();
    if (trace) trace->ess(j - 1) = 1.0 / w.squaredNorm();
    RngStream stage = rng.at_step(j);
    RngStream resample_rng = stage.fork(n);
    Vector uniforms(n);
    for (int i = 0; i < n; ++i) uniforms(i) = resample_rng.uniform();
    members = sampling::resample(WeightedEnsemble(std::move(members), w),
                                 uniforms);
    if (mutation_steps > 0) {
      const double cool = j * schedule.h;
      const std::function<double(const Vector&)> log_g =
          [&problem, &prior, cool](const Vector& centered) {
            return -cool * problem.misfit(Vector(prior.mean + centered));
          };
      for (int i = 0; i < n; ++i) {
        RngStream chain = stage.fork(i);
        Vector centered = members.row(i).transpose() - prior.mean;
        for (int t = 0; t < mutation_steps; ++t)
          centered =
              mcmc::pcn_step(centered, prior.cov, beta, log_g, always, chain)
                  .state;
        members.row(i) = (prior.mean + centered).transpose();
      }
    }
    if (trace) trace->mean.row(j) = members.colwise().mean();
  }
  return WeightedEnsemble::uniform(std::move(members));
}

}  // namespace dassim::inversion
