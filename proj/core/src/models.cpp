#include "dassim/models.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "dassim/core_ops.hpp"
#include "dassim/error.hpp"

namespace dassim::models {

namespace {

SpdMatrix spd1(double v) { return SpdMatrix((Matrix(1, 1) << v).finished()); }

Vector vec1(double v) { return (Vector(1) << v).finished(); }

SyntheticRun simulate_impl(const std::function<Vector(const Vector&)>& psi,
                           const Matrix& h, const SpdMatrix& sigma,
                           const SpdMatrix& gamma, const Gaussian& init,
                           int j_steps, const RngStream& rng,
                           bool noise_free_dynamics) {
  if (j_steps < 1) throw std::invalid_argument("need at least one step");
  const int d = init.dim();
  const int k = gamma.dim();
  SyntheticRun run;
  run.seed = rng.seed();
  run.truth.resize(j_steps + 1, d);
  run.data.resize(j_steps, k);
  RngStream init_rng = rng.at_step(0);
  run.truth.row(0) = sample_gaussian(init, 1, init_rng);
  const Matrix chol_sigma = sigma.chol_lower();
  const Matrix chol_gamma = gamma.chol_lower();
  for (int j = 1; j <= j_steps; ++j) {
    RngStream step_rng = rng.at_step(j);
    Vector v = psi(run.truth.row(j - 1).transpose());
    if (!noise_free_dynamics) v += chol_sigma * step_rng.fork(0).normals(d);
    if (!v.allFinite())
      throw NumericalError("simulated trajectory became non-finite");
    run.truth.row(j) = v.transpose();
    run.data.row(j - 1) =
        (h * v + chol_gamma * step_rng.fork(1).normals(k)).transpose();
  }
  return run;
}

}  // namespace

OdeForwardModel::OdeForwardModel(
    std::function<Vector(const Vector&, const Vector&)> rhs, int steps,
    int state_dim, int param_dim)
    : F(std::move(rhs)), L(steps), dim_x(state_dim), dim_u(param_dim) {
  if (!F) throw std::invalid_argument("rhs must be set");
  if (L < 1) throw std::invalid_argument("step count must be >= 1");
  if (dim_x < 1 || dim_u < 1)
    throw std::invalid_argument("dimensions must be >= 1");
}

Vector euler_forward(const OdeForwardModel& model, const Vector& u,
                     std::optional<int> l_override) {
  const int l = l_override.value_or(model.L);
  if (l < 1) throw std::invalid_argument("step count must be >= 1");
  if (u.size() != model.dim_u)
    throw std::invalid_argument("parameter has wrong dimension");
  const double delta = 1.0 / l;
  Vector x = Vector::Zero(model.dim_x);
  for (int step = 0; step < l; ++step) {
    Vector f = model.F(x, u);
    if (f.size() != model.dim_x)
      throw std::invalid_argument("rhs output has wrong dimension");
    x += delta * f;
    if (!x.allFinite())
      throw NumericalError("euler state became non-finite");
  }
  return x;
}

SyntheticRun simulate(const kalman::LinearModel& model, int j_steps,
                      const RngStream& rng, bool noise_free_dynamics) {
  const Matrix m = model.M;
  return simulate_impl([m](const Vector& v) { return Vector(m * v); },
                       model.H, model.Sigma, model.Gamma, model.init, j_steps,
                       rng, noise_free_dynamics);
}

SyntheticRun simulate(const NonlinearModel& model, int j_steps,
                      const RngStream& rng, bool noise_free_dynamics) {
  return simulate_impl(model.psi, model.H, model.Sigma, model.Gamma,
                       model.init, j_steps, rng, noise_free_dynamics);
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {
      "scalar-lg", "vector-lg-d4k2", "contractive-3dvar", "logistic-nl",
      "ode-inverse"};
  return names;
}

BenchmarkProblem make_benchmark(const std::string& name) {
  BenchmarkProblem bench;
  bench.name = name;
  if (name == "scalar-lg") {
    Matrix one = (Matrix(1, 1) << 1.0).finished();
    Gaussian init(vec1(0.0), spd1(1.0));
    bench.linear.emplace(one, one, spd1(1.0), spd1(1.0), init);
    bench.nonlinear.emplace([](const Vector& v) { return v; },
                            [one](const Vector&) { return one; }, one,
                            spd1(1.0), spd1(1.0), init);
    return bench;
  }
  if (name == "vector-lg-d4k2") {
    Matrix m(4, 4);
    m << 0.8, 0.1, 0.0, 0.0,
        -0.1, 0.7, 0.2, 0.0,
        0.0, -0.2, 0.9, 0.1,
        0.05, 0.0, -0.1, 0.6;
    Matrix h(2, 4);
    h << 1.0, 0.0, 0.5, 0.0,
        0.0, 1.0, 0.0, -0.5;
    Matrix sigma = Matrix::Constant(4, 4, 0.05);
    sigma.diagonal().setConstant(0.35);
    Matrix gamma(2, 2);
    gamma << 0.2, 0.05, 0.05, 0.2;
    Gaussian init((Vector(4) << 0.5, -0.5, 0.3, 0.0).finished(),
                  SpdMatrix(Matrix(0.8 * Matrix::Identity(4, 4))));
    bench.linear.emplace(m, h, SpdMatrix(sigma), SpdMatrix(gamma), init);
    bench.nonlinear.emplace([m](const Vector& v) { return Vector(m * v); },
                            [m](const Vector&) { return m; }, h,
                            SpdMatrix(sigma), SpdMatrix(gamma), init);
    return bench;
  }
  if (name == "contractive-3dvar") {
    Matrix one = (Matrix(1, 1) << 1.0).finished();
    bench.nonlinear.emplace(
        [](const Vector& v) { return Vector(0.9 * v.array().sin()); },
        [](const Vector& v) {
          return Matrix((Matrix(1, 1) << 0.9 * std::cos(v(0))).finished());
        },
        one, spd1(1e-12), spd1(0.01), Gaussian(vec1(1.0), spd1(1.0)));
    bench.fixed_gain = (Matrix(1, 1) << 0.5).finished();
    return bench;
  }
  if (name == "logistic-nl") {
    Matrix one = (Matrix(1, 1) << 1.0).finished();
    bench.nonlinear.emplace(
        [](const Vector& v) { return Vector(v.array().tanh()); },
        [](const Vector& v) {
          double t = std::tanh(v(0));
          return Matrix((Matrix(1, 1) << 1.0 - t * t).finished());
        },
        one, spd1(0.25), spd1(0.01), Gaussian(vec1(0.0), spd1(1.0)));
    return bench;
  }
  if (name == "ode-inverse") {
    bench.ode.emplace(
        [](const Vector& x, const Vector& u) { return Vector(u - x); }, 32, 1,
        1);
    OdeForwardModel ode = *bench.ode;
    bench.inverse = InverseProblem::with_gaussian_prior(
        [ode](const Vector& u) { return euler_forward(ode, u); }, spd1(0.01),
        vec1(0.4), Gaussian(vec1(0.0), spd1(1.0)));
    return bench;
  }
  std::string valid;
  for (const std::string& n : benchmark_names()) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw std::invalid_argument("unknown benchmark '" + name +
                              "'; valid names: " + valid);
}

}  // namespace dassim::models
