#include "dassim/mcmc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dassim/error.hpp"

namespace dassim::mcmc {

namespace {
constexpr double kRowSumTol = 1e-12;
constexpr double kPowerIterTol = 1e-12;
constexpr int kPowerIterMax = 100000;

// Acceptance shared by mh_step/pcn_step: one uniform per call, log-space
// comparison. log(u) < log_ratio accepts certainly when log_ratio >= 0.
bool accept_log_ratio(double log_ratio, RngStream& rng) {
  const double u = rng.uniform();
  return std::log(u) < log_ratio;
}
}  // namespace

StepResult mh_step(const Vector& state, const TargetDensity& target,
                   const ProposalKernel& proposal, RngStream& rng) {
  const double lp_state = target.log_unnormalized(state);
  if (!(lp_state > -std::numeric_limits<double>::infinity())) {
    throw std::invalid_argument("mh_step: target vanishes at current state");
  }
  const Vector candidate = proposal.sample(state, rng);
  double log_ratio = target.log_unnormalized(candidate) - lp_state;
  if (!proposal.symmetric) {
    if (!proposal.log_density) {
      throw std::invalid_argument(
          "mh_step: asymmetric proposal requires log_density");
    }
    log_ratio +=
        proposal.log_density(candidate, state) - proposal.log_density(state, candidate);
  }
  if (accept_log_ratio(log_ratio, rng)) {
    return {candidate, true};
  }
  return {state, false};
}

StepResult pcn_step(const Vector& state, const SpdMatrix& prior_cov,
                    double beta, const std::function<double(const Vector&)>& log_g,
                    const std::function<bool(const Vector&)>& support,
                    RngStream& rng) {
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("pcn_step: beta must lie in (0, 1]");
  }
  if (state.size() != prior_cov.dim()) {
    throw std::invalid_argument("pcn_step: state/prior dimension mismatch");
  }
  const Vector xi =
      prior_cov.chol_lower() * rng.normals(static_cast<int>(state.size()));
  const Vector candidate = std::sqrt(1.0 - beta * beta) * state + beta * xi;

  // Support indicator first; log_g is not evaluated outside the support.
  if (!support(candidate)) {
    rng.uniform();  // keep the per-step draw count fixed
    return {state, false};
  }
  const double lg_state = log_g(state);
  if (!(lg_state > -std::numeric_limits<double>::infinity())) {
    throw std::invalid_argument("pcn_step: log_g vanishes at current state");
  }
  const double log_ratio = log_g(candidate) - lg_state;
  if (accept_log_ratio(log_ratio, rng)) {
    return {candidate, true};
  }
  return {state, false};
}

ChainResult run_chain(
    const Vector& init,
    const std::function<StepResult(const Vector&, RngStream&)>& step,
    int n_steps, RngStream& rng) {
  if (n_steps < 1) {
    throw std::invalid_argument("run_chain: n_steps must be >= 1");
  }
  ChainResult out;
  out.samples = Matrix(n_steps, init.size());
  Vector state = init;
  long accepted = 0;
  for (int i = 0; i < n_steps; ++i) {
    StepResult r = step(state, rng);
    accepted += r.accepted ? 1 : 0;
    state = std::move(r.state);
    out.samples.row(i) = state.transpose();
  }
  out.acceptance_rate = static_cast<double>(accepted) / n_steps;
  return out;
}

FiniteChain::FiniteChain(Matrix p) : p_(std::move(p)) {
  if (p_.rows() == 0 || p_.rows() != p_.cols()) {
    throw std::invalid_argument("FiniteChain: square nonempty kernel required");
  }
  if (p_.minCoeff() < 0.0) {
    throw std::invalid_argument("FiniteChain: negative transition probability");
  }
  for (long i = 0; i < p_.rows(); ++i) {
    if (std::abs(p_.row(i).sum() - 1.0) > kRowSumTol) {
      throw std::invalid_argument("FiniteChain: rows must sum to 1");
    }
  }
}

FiniteChain finite_mh_kernel(const Matrix& proposal, const Vector& target) {
  const long s = proposal.rows();
  if (s == 0 || proposal.cols() != s || target.size() != s) {
    throw std::invalid_argument("finite_mh_kernel: dimension mismatch");
  }
  if (proposal.minCoeff() <= 0.0 || target.minCoeff() <= 0.0) {
    throw std::invalid_argument(
        "finite_mh_kernel: proposal and target must be strictly positive");
  }
  if (std::abs(target.sum() - 1.0) > kRowSumTol) {
    throw std::invalid_argument("finite_mh_kernel: target must sum to 1");
  }
  Matrix p = Matrix::Zero(s, s);
  for (long i = 0; i < s; ++i) {
    double off_mass = 0.0;
    for (long j = 0; j < s; ++j) {
      if (i == j) continue;
      const double a =
          std::min(1.0, target[j] * proposal(j, i) / (target[i] * proposal(i, j)));
      p(i, j) = proposal(i, j) * a;
      off_mass += p(i, j);
    }
    p(i, i) = 1.0 - off_mass;
  }
  return FiniteChain(p);
}

TvDecay finite_tv_decay(const FiniteChain& chain, const Vector& pi0, int n) {
  const Matrix& p = chain.kernel();
  const long s = p.rows();
  if (pi0.size() != s) {
    throw std::invalid_argument("finite_tv_decay: pi0 dimension mismatch");
  }
  if (pi0.minCoeff() < 0.0 || std::abs(pi0.sum() - 1.0) > kRowSumTol) {
    throw std::invalid_argument("finite_tv_decay: pi0 must be a distribution");
  }
  if (n < 1) {
    throw std::invalid_argument("finite_tv_decay: n must be >= 1");
  }

  // Invariant distribution by power iteration. The start is deliberately
  // non-uniform so periodic kernels oscillate instead of sitting on a
  // symmetric fixed point.
  Vector x(s);
  for (long i = 0; i < s; ++i) x[i] = static_cast<double>(i + 1);
  x /= x.sum();
  bool converged = false;
  for (int it = 0; it < kPowerIterMax; ++it) {
    const Vector next = p.transpose() * x;
    const double residual = (next - x).cwiseAbs().sum();
    x = next;
    if (residual <= kPowerIterTol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NumericalError(
        "finite_tv_decay: power iteration did not reach a fixed point");
  }
  TvDecay out;
  out.invariant = x / x.sum();
  out.epsilon = p.minCoeff();
  out.tv_seq = Vector(n);
  Vector dist = pi0;
  for (int k = 0; k < n; ++k) {
    dist = p.transpose() * dist;
    out.tv_seq[k] = 0.5 * (dist - out.invariant).cwiseAbs().sum();
  }
  return out;
}

}  // namespace dassim::mcmc
