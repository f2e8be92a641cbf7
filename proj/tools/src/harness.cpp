#include "dassim/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dassim/core_ops.hpp"
#include "dassim/ensemble.hpp"
#include "dassim/error.hpp"
#include "dassim/inversion.hpp"
#include "dassim/kalman.hpp"
#include "dassim/mcmc.hpp"
#include "dassim/particle.hpp"
#include "dassim/problem.hpp"
#include "dassim/rng.hpp"
#include "dassim/sampling.hpp"
#include "dassim/variational.hpp"

#ifndef DASSIM_VERSION_STRING
#define DASSIM_VERSION_STRING "0.0.0"
#endif

namespace dassim::harness {

namespace {

// ---------------------------------------------------------------- json utils

std::string quote_key(const std::string& s) { return "\"" + s + "\""; }

json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object())
    throw ConfigError("key " + quote_key(path) + " must be an object");
}

void check_allowed_keys(const json& obj, const std::string& prefix,
                        std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw ConfigError("unknown key " + quote_key(prefix + item.key()));
  }
}

const json* find_key(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& require_key(const json& obj, const std::string& key,
                        const std::string& prefix) {
  const json* v = find_key(obj, key);
  if (!v) throw ConfigError("missing required key " + quote_key(prefix + key));
  return *v;
}

std::uint64_t parse_u64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError("key " + quote_key(path) + " must be an unsigned integer");
}

int parse_int(const json& v, const std::string& path) {
  if (!v.is_number_integer())
    throw ConfigError("key " + quote_key(path) + " must be an integer");
  return v.get<int>();
}

double parse_double(const json& v, const std::string& path) {
  if (!v.is_number())
    throw ConfigError("key " + quote_key(path) + " must be a number");
  return v.get<double>();
}

bool parse_bool(const json& v, const std::string& path) {
  if (!v.is_boolean())
    throw ConfigError("key " + quote_key(path) + " must be a boolean");
  return v.get<bool>();
}

std::string parse_string(const json& v, const std::string& path) {
  if (!v.is_string())
    throw ConfigError("key " + quote_key(path) + " must be a string");
  return v.get<std::string>();
}

Matrix parse_json_matrix(const json& v, const std::string& path) {
  const std::string what =
      "key " + quote_key(path) +
      " must be a matrix (nonempty array of equal-length numeric arrays)";
  if (!v.is_array() || v.empty()) throw ConfigError(what);
  const auto rows = static_cast<long>(v.size());
  if (!v[0].is_array() || v[0].empty()) throw ConfigError(what);
  const auto cols = static_cast<long>(v[0].size());
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    if (!v[i].is_array() || static_cast<long>(v[i].size()) != cols)
      throw ConfigError(what);
    for (long j = 0; j < cols; ++j) {
      if (!v[i][j].is_number()) throw ConfigError(what);
      m(i, j) = v[i][j].get<double>();
    }
  }
  return m;
}

Vector parse_json_vector(const json& v, const std::string& path) {
  const std::string what =
      "key " + quote_key(path) + " must be a nonempty numeric array";
  if (!v.is_array() || v.empty()) throw ConfigError(what);
  Vector x(static_cast<long>(v.size()));
  for (long i = 0; i < x.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(what);
    x(i) = v[i].get<double>();
  }
  return x;
}

SpdMatrix parse_json_spd(const json& v, const std::string& path) {
  Matrix m = parse_json_matrix(v, path);
  try {
    return SpdMatrix(std::move(m));
  } catch (const std::exception& e) {
    throw ConfigError("key " + quote_key(path) +
                      " is not symmetric positive definite: " + e.what());
  }
}

// ---------------------------------------------------------------- formatting

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ------------------------------------------------------------- method groups

bool is_state_space(Method m) {
  switch (m) {
    case Method::kKf:
    case Method::kKs:
    case Method::k3dvar:
    case Method::k4dvar:
    case Method::kW4dvar:
    case Method::kExkf:
    case Method::kEnkf:
    case Method::kBpf:
    case Method::kOpf:
    case Method::kGopf:
      return true;
    default:
      return false;
  }
}

bool is_particle_filter(Method m) {
  return m == Method::kBpf || m == Method::kOpf || m == Method::kGopf;
}

bool needs_ensemble_size(Method m) {
  switch (m) {
    case Method::kEnkf:
    case Method::kBpf:
    case Method::kOpf:
    case Method::kGopf:
    case Method::kMh:
    case Method::kPcn:
    case Method::kEki:
    case Method::kSmc:
      return true;
    default:
      return false;
  }
}

bool needs_beta(Method m) { return m == Method::kPcn || m == Method::kSmc; }

// ------------------------------------------------------------ model plumbing

const NonlinearModel& require_nonlinear(const models::BenchmarkProblem& bp,
                                        Method m) {
  if (!bp.nonlinear)
    throw ConfigError("method " + quote_key(method_name(m)) +
                      " requires a state-space model; " + quote_key(bp.name) +
                      " provides none");
  return *bp.nonlinear;
}

const kalman::LinearModel& require_linear(const models::BenchmarkProblem& bp,
                                          Method m) {
  if (!bp.linear)
    throw ConfigError("method " + quote_key(method_name(m)) +
                      " requires a linear-Gaussian model; " + quote_key(bp.name) +
                      " is not one");
  return *bp.linear;
}

const InverseProblem& require_inverse(const models::BenchmarkProblem& bp,
                                      Method m) {
  if (!bp.inverse)
    throw ConfigError("method " + quote_key(method_name(m)) +
                      " requires an inverse-problem model; " + quote_key(bp.name) +
                      " provides none");
  return *bp.inverse;
}

const Gaussian& require_gaussian_prior(const InverseProblem& prob,
                                       const std::string& benchmark,
                                       Method m) {
  if (!prob.gaussian_prior)
    throw ConfigError("method " + quote_key(method_name(m)) +
                      " requires a Gaussian prior; " + quote_key(benchmark) +
                      " has a non-Gaussian one");
  return *prob.gaussian_prior;
}

int model_state_dim(const models::BenchmarkProblem& bp) {
  if (bp.linear) return bp.linear->state_dim();
  if (bp.nonlinear) return bp.nonlinear->state_dim();
  throw ConfigError("model " + quote_key(bp.name) + " has no state-space view");
}

int model_obs_dim(const models::BenchmarkProblem& bp) {
  if (bp.linear) return bp.linear->obs_dim();
  if (bp.nonlinear) return bp.nonlinear->obs_dim();
  throw ConfigError("model " + quote_key(bp.name) + " has no state-space view");
}

models::BenchmarkProblem rescale_noise(models::BenchmarkProblem bp,
                                       double sigma_scale,
                                       double gamma_scale) {
  if (bp.linear) {
    kalman::LinearModel lm = *bp.linear;
    bp.linear.emplace(lm.M, lm.H,
                      SpdMatrix(Matrix(sigma_scale * lm.Sigma.matrix())),
                      SpdMatrix(Matrix(gamma_scale * lm.Gamma.matrix())),
                      lm.init);
  }
  if (bp.nonlinear) {
    NonlinearModel nm = *bp.nonlinear;
    bp.nonlinear.emplace(nm.psi, nm.jacobian_psi, nm.H,
                         SpdMatrix(Matrix(sigma_scale * nm.Sigma.matrix())),
                         SpdMatrix(Matrix(gamma_scale * nm.Gamma.matrix())),
                         nm.init);
  }
  if (bp.inverse) {
    InverseProblem ip = *bp.inverse;
    SpdMatrix scaled{Matrix(gamma_scale * ip.noise_cov.matrix())};
    if (ip.gaussian_prior) {
      bp.inverse = InverseProblem::with_gaussian_prior(
          ip.forward, scaled, ip.data, *ip.gaussian_prior);
    } else {
      bp.inverse.emplace(ip.forward, ip.log_prior, scaled, ip.dim, ip.data);
    }
  }
  return bp;
}

// ------------------------------------------------------------ method params

MethodParams parse_params(const json& cfg) {
  MethodParams p;
  const json* params = find_key(cfg, "params");
  if (!params) return p;
  require_object(*params, "params");
  check_allowed_keys(*params, "params.",
                     {"N", "beta", "temperatures", "mutations", "s", "perturb",
                      "rw_step", "grad_tol", "max_iters"});
  if (const json* v = find_key(*params, "N")) {
    p.n = parse_int(*v, "params.N");
    if (*p.n < 1) throw ConfigError("key \"params.N\" must be >= 1");
  }
  if (const json* v = find_key(*params, "beta")) {
    p.beta = parse_double(*v, "params.beta");
    if (!(*p.beta > 0.0) || *p.beta > 1.0)
      throw ConfigError("key \"params.beta\" must lie in (0, 1]");
  }
  if (const json* v = find_key(*params, "temperatures")) {
    p.temperatures = parse_int(*v, "params.temperatures");
    if (p.temperatures < 1)
      throw ConfigError("key \"params.temperatures\" must be >= 1");
  }
  if (const json* v = find_key(*params, "mutations")) {
    p.mutations = parse_int(*v, "params.mutations");
    if (p.mutations < 0)
      throw ConfigError("key \"params.mutations\" must be >= 0");
  }
  if (const json* v = find_key(*params, "s")) {
    p.obs_perturb = parse_int(*v, "params.s");
    if (p.obs_perturb != 0 && p.obs_perturb != 1)
      throw ConfigError("key \"params.s\" must be 0 or 1");
  }
  if (const json* v = find_key(*params, "perturb"))
    p.perturb = parse_bool(*v, "params.perturb");
  if (const json* v = find_key(*params, "rw_step")) {
    p.rw_step = parse_double(*v, "params.rw_step");
    if (!(p.rw_step > 0.0))
      throw ConfigError("key \"params.rw_step\" must be > 0");
  }
  if (const json* v = find_key(*params, "grad_tol")) {
    p.grad_tol = parse_double(*v, "params.grad_tol");
    if (!(p.grad_tol > 0.0))
      throw ConfigError("key \"params.grad_tol\" must be > 0");
  }
  if (const json* v = find_key(*params, "max_iters")) {
    p.max_iters = parse_int(*v, "params.max_iters");
    if (p.max_iters < 1)
      throw ConfigError("key \"params.max_iters\" must be >= 1");
  }
  return p;
}

void validate_method_params(Method m, const MethodParams& p) {
  if (needs_ensemble_size(m) && !p.n)
    throw ConfigError("method " + quote_key(method_name(m)) +
                      " requires params.N");
  if (needs_beta(m) && !p.beta)
    throw ConfigError("method " + quote_key(method_name(m)) +
                      " requires params.beta");
}

json params_to_json(const MethodParams& p) {
  json out = json::object();
  if (p.n) out["N"] = *p.n;
  if (p.beta) out["beta"] = *p.beta;
  out["temperatures"] = p.temperatures;
  out["mutations"] = p.mutations;
  out["s"] = p.obs_perturb;
  out["perturb"] = p.perturb;
  out["rw_step"] = p.rw_step;
  out["grad_tol"] = p.grad_tol;
  out["max_iters"] = p.max_iters;
  return out;
}

std::string parse_format_value(const json& v, const std::string& path) {
  std::string f = parse_string(v, path);
  if (f != "csv" && f != "json")
    throw ConfigError("key " + quote_key(path) + " must be \"csv\" or \"json\"");
  return f;
}

int parse_steps_value(const json& v, const std::string& path) {
  int s = parse_int(v, path);
  if (s < 1) throw ConfigError("key " + quote_key(path) + " must be >= 1");
  return s;
}

// --------------------------------------------------------------- run helpers

std::vector<std::string> indexed_columns(const std::string& prefix, int n) {
  std::vector<std::string> cols;
  for (int i = 1; i <= n; ++i) cols.push_back(prefix + "_" + std::to_string(i));
  return cols;
}

void push_row(RunReport& rep, double step, const Vector& estimate,
              std::initializer_list<double> extras) {
  std::vector<double> row;
  row.reserve(1 + estimate.size() + extras.size());
  row.push_back(step);
  for (long i = 0; i < estimate.size(); ++i) row.push_back(estimate(i));
  for (double e : extras) row.push_back(e);
  rep.rows.push_back(std::move(row));
}

void summarize_estimate(RunReport& rep, const Vector& estimate) {
  for (long i = 0; i < estimate.size(); ++i)
    rep.summary.emplace_back("final_mean_" + std::to_string(i + 1),
                             estimate(i));
}

// Posterior mean path (rows 0..J) of an ensemble or particle filter, shared
// by `run` and `bench`. The parent stream keys one substream per step: the
// initial draw at step 0, particle steps at step j, ensemble prediction /
// analysis at steps 2j-1 / 2j. `diag` receives the per-step covariance trace
// (enkf) or effective sample size (particle filters).
Matrix filter_mean_path(Method method, const NonlinearModel& model,
                        const Matrix& data, int n, int obs_perturb,
                        const RngStream& base, Vector* diag) {
  const int j_steps = static_cast<int>(data.rows());
  const int d = model.state_dim();
  Matrix means(j_steps + 1, d);
  if (diag) diag->resize(j_steps + 1);
  RngStream init_rng = base.at_step(0);
  if (method == Method::kEnkf) {
    Matrix members = sample_gaussian(model.init, n, init_rng);
    ensemble::EmpiricalMoments mom = ensemble::empirical_moments(members);
    means.row(0) = mom.mean.transpose();
    if (diag) (*diag)(0) = mom.cov.trace();
    for (int j = 1; j <= j_steps; ++j) {
      members = ensemble::enkf_predict(members, model, base.at_step(2 * j - 1));
      Vector y = data.row(j - 1).transpose();
      members = ensemble::enkf_analysis(members, model.H, model.Gamma, y,
                                        base.at_step(2 * j), obs_perturb);
      mom = ensemble::empirical_moments(members);
      means.row(j) = mom.mean.transpose();
      if (diag) (*diag)(j) = mom.cov.trace();
    }
    return means;
  }
  std::optional<particle::OpfKernel> kernel;
  if (method == Method::kOpf || method == Method::kGopf)
    kernel = particle::opf_kernel(model.Sigma, model.H, model.Gamma);
  sampling::WeightedEnsemble ens =
      sampling::WeightedEnsemble::uniform(sample_gaussian(model.init, n,
                                                          init_rng));
  means.row(0) = ens.mean().transpose();
  if (diag) (*diag)(0) = static_cast<double>(n);
  for (int j = 1; j <= j_steps; ++j) {
    Vector y = data.row(j - 1).transpose();
    particle::StepResult st =
        method == Method::kBpf
            ? particle::bpf_step(ens, model, y, base.at_step(j))
            : method == Method::kOpf
                  ? particle::opf_step(ens, model, y, *kernel,
                                       base.at_step(j))
                  : particle::gopf_step(ens, model, y, *kernel,
                                        base.at_step(j));
    means.row(j) = st.posterior.mean().transpose();
    if (diag)
      (*diag)(j) = particle::effective_sample_size(st.weighted.weights());
    ens = st.posterior;
  }
  return means;
}

// Parameter-space estimate dimension for compare: state dimension for
// filters and trajectory methods, unknown dimension for inversion methods.
int estimate_dim(Method m, const models::BenchmarkProblem& bp) {
  if (is_state_space(m)) return model_state_dim(bp);
  return require_inverse(bp, m).dim;
}

}  // namespace

// ------------------------------------------------------------- method names

const std::vector<std::pair<Method, std::string>>& method_table() {
  static const std::vector<std::pair<Method, std::string>> table = {
      {Method::kKf, "kf"},       {Method::kKs, "ks"},
      {Method::k3dvar, "3dvar"}, {Method::k4dvar, "4dvar"},
      {Method::kW4dvar, "w4dvar"}, {Method::kExkf, "exkf"},
      {Method::kEnkf, "enkf"},   {Method::kBpf, "bpf"},
      {Method::kOpf, "opf"},     {Method::kGopf, "gopf"},
      {Method::kMh, "mh"},       {Method::kPcn, "pcn"},
      {Method::kEki, "eki"},     {Method::kSmc, "smc"},
      {Method::kMap, "map"},     {Method::kGaussFit, "gauss-fit"},
  };
  return table;
}

std::string method_name(Method method) {
  for (const auto& [m, name] : method_table())
    if (m == method) return name;
  throw std::invalid_argument("unhandled method enum value");
}

Method method_from_name(const std::string& name) {
  std::string valid;
  for (const auto& [m, n] : method_table()) {
    if (n == name) return m;
    valid += valid.empty() ? n : ", " + n;
  }
  throw ConfigError("unknown method " + quote_key(name) +
                    "; valid methods: " + valid);
}

// ------------------------------------------------------------ model resolve

models::BenchmarkProblem resolve_model(const json& model) {
  if (model.is_string()) {
    try {
      return models::make_benchmark(model.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("key \"model\": ") + e.what());
    }
  }
  if (model.is_object() && model.contains("name")) {
    check_allowed_keys(model, "model.", {"name", "gamma_scale", "sigma_scale"});
    std::string name = parse_string(model.at("name"), "model.name");
    double gamma_scale = 1.0;
    double sigma_scale = 1.0;
    if (const json* v = find_key(model, "gamma_scale")) {
      gamma_scale = parse_double(*v, "model.gamma_scale");
      if (!(gamma_scale > 0.0))
        throw ConfigError("key \"model.gamma_scale\" must be > 0");
    }
    if (const json* v = find_key(model, "sigma_scale")) {
      sigma_scale = parse_double(*v, "model.sigma_scale");
      if (!(sigma_scale > 0.0))
        throw ConfigError("key \"model.sigma_scale\" must be > 0");
    }
    models::BenchmarkProblem bp;
    try {
      bp = models::make_benchmark(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("key \"model.name\": ") + e.what());
    }
    return rescale_noise(std::move(bp), sigma_scale, gamma_scale);
  }
  if (model.is_object() && model.contains("kind")) {
    std::string kind = parse_string(model.at("kind"), "model.kind");
    if (kind != "linear")
      throw ConfigError(
          "key \"model.kind\" must be \"linear\" (the only inline kind)");
    check_allowed_keys(model, "model.",
                       {"kind", "M", "H", "Sigma", "Gamma", "m0", "C0"});
    Matrix m = parse_json_matrix(require_key(model, "M", "model."), "model.M");
    Matrix h = parse_json_matrix(require_key(model, "H", "model."), "model.H");
    SpdMatrix sigma =
        parse_json_spd(require_key(model, "Sigma", "model."), "model.Sigma");
    SpdMatrix gamma =
        parse_json_spd(require_key(model, "Gamma", "model."), "model.Gamma");
    Vector m0 =
        parse_json_vector(require_key(model, "m0", "model."), "model.m0");
    SpdMatrix c0 =
        parse_json_spd(require_key(model, "C0", "model."), "model.C0");
    models::BenchmarkProblem bp;
    bp.name = "inline-linear";
    try {
      Gaussian init(m0, c0);
      bp.linear.emplace(m, h, sigma, gamma, init);
      bp.nonlinear.emplace([m](const Vector& v) { return Vector(m * v); },
                           [m](const Vector&) { return m; }, h, sigma, gamma,
                           init);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("key \"model\": ") + e.what());
    }
    return bp;
  }
  throw ConfigError(
      "key \"model\" must be a benchmark name, a {\"name\", ...} modifier "
      "object, or an inline {\"kind\": \"linear\", ...} spec");
}

// ------------------------------------------------------------ config parse

ExperimentConfig parse_config(const std::string& text) {
  json j = parse_json_text(text);
  require_object(j, "config");
  check_allowed_keys(j, "",
                     {"method", "model", "seed", "steps", "data", "params",
                      "out", "format"});
  ExperimentConfig cfg;
  cfg.method = method_from_name(
      parse_string(require_key(j, "method", ""), "method"));
  cfg.model = require_key(j, "model", "");
  resolve_model(cfg.model);  // validates; result rebuilt on use
  cfg.seed = parse_u64(require_key(j, "seed", ""), "seed");
  if (const json* v = find_key(j, "steps"))
    cfg.steps = parse_steps_value(*v, "steps");
  if (const json* v = find_key(j, "data"))
    cfg.data_path = parse_string(*v, "data");
  cfg.params = parse_params(j);
  validate_method_params(cfg.method, cfg.params);
  if (const json* v = find_key(j, "out"))
    cfg.out_path = parse_string(*v, "out");
  if (const json* v = find_key(j, "format"))
    cfg.format = parse_format_value(*v, "format");
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json out;
  out["method"] = method_name(cfg.method);
  out["model"] = cfg.model;
  out["seed"] = cfg.seed;
  out["steps"] = cfg.steps;
  if (cfg.data_path) out["data"] = *cfg.data_path;
  out["params"] = params_to_json(cfg.params);
  if (cfg.out_path) out["out"] = *cfg.out_path;
  out["format"] = cfg.format;
  return out;
}

std::string emit_config(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

// ------------------------------------------------------------- experiments

RunReport run_experiment(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  models::BenchmarkProblem bp = resolve_model(cfg.model);
  const auto t0 = std::chrono::steady_clock::now();

  // Data: simulated from phase 0 of the seed, or loaded from file (which then
  // fixes the horizon for state-space methods and replaces the datum of an
  // inverse problem).
  Matrix data;
  std::optional<Matrix> truth;
  if (is_state_space(cfg.method)) {
    if (cfg.data_path) {
      data = read_observations(*cfg.data_path, model_obs_dim(bp));
      cfg.steps = static_cast<int>(data.rows());
    } else {
      models::SyntheticRun run =
          bp.linear ? models::simulate(*bp.linear, cfg.steps,
                                       RngStream(cfg.seed, 0))
                    : models::simulate(require_nonlinear(bp, cfg.method),
                                       cfg.steps, RngStream(cfg.seed, 0));
      data = run.data;
      truth = run.truth;
    }
  } else if (cfg.data_path) {
    const InverseProblem& prob = require_inverse(bp, cfg.method);
    Matrix obs = read_observations(*cfg.data_path, prob.noise_cov.dim());
    if (obs.rows() != 1)
      throw ConfigError(
          "inverse-problem data files need exactly one observation row; " +
          quote_key(*cfg.data_path) + " has " + std::to_string(obs.rows()));
    bp.inverse->data = obs.row(0).transpose();
  }

  RunReport rep;
  // The echo covers everything that shapes the report's content; the output
  // path is delivery metadata, and including it would make the same
  // experiment produce different bytes at different destinations.
  ExperimentConfig echo_cfg = cfg;
  echo_cfg.out_path.reset();
  rep.config_echo = config_to_json(echo_cfg);
  rep.version = DASSIM_VERSION_STRING;

  const RngStream base(cfg.seed, 1);

  switch (cfg.method) {
    case Method::kKf: {
      const kalman::LinearModel& lm = require_linear(bp, cfg.method);
      kalman::FilterTrace trace = kalman::kalman_filter(lm, data);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("mean", lm.state_dim()))
        rep.columns.push_back(c);
      rep.columns.push_back("cov_trace");
      for (int j = 0; j <= cfg.steps; ++j)
        push_row(rep, j, trace.updated[j].mean,
                 {trace.updated[j].cov.matrix().trace()});
      summarize_estimate(rep, trace.updated[cfg.steps].mean);
      rep.summary.emplace_back("final_cov_trace",
                               trace.updated[cfg.steps].cov.matrix().trace());
      break;
    }
    case Method::kKs: {
      const kalman::LinearModel& lm = require_linear(bp, cfg.method);
      kalman::SmootherResult res = kalman::kalman_smoother(lm, data);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("mean", lm.state_dim()))
        rep.columns.push_back(c);
      for (int j = 0; j <= cfg.steps; ++j)
        push_row(rep, j, res.means.row(j).transpose(), {});
      summarize_estimate(rep, res.means.row(cfg.steps).transpose());
      break;
    }
    case Method::k3dvar: {
      const NonlinearModel& model = require_nonlinear(bp, cfg.method);
      Matrix gain = bp.fixed_gain
                        ? *bp.fixed_gain
                        : variational::gain_3dvar(model.init.cov, model.H,
                                                  model.Gamma)
                              .gain;
      Matrix path = variational::run_3dvar(model, data, gain);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("mean", model.state_dim()))
        rep.columns.push_back(c);
      if (truth) rep.columns.push_back("err_norm");
      for (int j = 0; j <= cfg.steps; ++j) {
        if (truth)
          push_row(rep, j, path.row(j).transpose(),
                   {(path.row(j) - truth->row(j)).norm()});
        else
          push_row(rep, j, path.row(j).transpose(), {});
      }
      summarize_estimate(rep, path.row(cfg.steps).transpose());
      if (truth) {
        const int tail_start = (cfg.steps + 1) / 2;
        double acc = 0.0;
        for (int j = tail_start; j <= cfg.steps; ++j)
          acc += (path.row(j) - truth->row(j)).norm();
        rep.summary.emplace_back("asymptotic_mean_error",
                                 acc / (cfg.steps + 1 - tail_start));
      }
      break;
    }
    case Method::k4dvar: {
      const NonlinearModel& model = require_nonlinear(bp, cfg.method);
      variational::DescentOptions opts;
      opts.grad_tol = cfg.params.grad_tol;
      opts.max_iters = cfg.params.max_iters;
      variational::Strong4dvarResult res =
          variational::strong_4dvar_minimize(model, data, model.init.mean,
                                             opts);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("v", model.state_dim()))
        rep.columns.push_back(c);
      for (int j = 0; j <= cfg.steps; ++j)
        push_row(rep, j, res.trajectory.row(j).transpose(), {});
      summarize_estimate(rep, res.trajectory.row(cfg.steps).transpose());
      rep.summary.emplace_back("objective", res.objective);
      rep.summary.emplace_back("iterations", res.iterations);
      rep.summary.emplace_back("converged", res.converged ? 1.0 : 0.0);
      break;
    }
    case Method::kW4dvar: {
      const NonlinearModel& model = require_nonlinear(bp, cfg.method);
      const int d = model.state_dim();
      Matrix traj0(cfg.steps + 1, d);
      traj0.row(0) = model.init.mean.transpose();
      for (int j = 0; j < cfg.steps; ++j)
        traj0.row(j + 1) = model.psi(traj0.row(j).transpose()).transpose();
      variational::DescentOptions opts;
      opts.grad_tol = cfg.params.grad_tol;
      opts.max_iters = cfg.params.max_iters;
      variational::W4dvarResult res =
          variational::w4dvar_minimize(model, data, traj0, opts);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("v", d)) rep.columns.push_back(c);
      for (int j = 0; j <= cfg.steps; ++j)
        push_row(rep, j, res.trajectory.row(j).transpose(), {});
      summarize_estimate(rep, res.trajectory.row(cfg.steps).transpose());
      rep.summary.emplace_back("objective", res.objective);
      rep.summary.emplace_back("max_violation", res.max_violation);
      rep.summary.emplace_back("grad_norm", res.grad_norm);
      rep.summary.emplace_back("iterations", res.iterations);
      rep.summary.emplace_back("converged", res.converged ? 1.0 : 0.0);
      break;
    }
    case Method::kExkf: {
      const NonlinearModel& model = require_nonlinear(bp, cfg.method);
      if (!model.has_jacobian())
        throw ConfigError("method \"exkf\" requires a model with an explicit "
                          "Jacobian; " +
                          quote_key(bp.name) + " lacks one");
      rep.columns = {"step"};
      for (auto& c : indexed_columns("mean", model.state_dim()))
        rep.columns.push_back(c);
      rep.columns.push_back("cov_trace");
      Gaussian g = model.init;
      push_row(rep, 0, g.mean, {g.cov.matrix().trace()});
      for (int j = 1; j <= cfg.steps; ++j) {
        g = ensemble::exkf_step(g, model, data.row(j - 1).transpose());
        push_row(rep, j, g.mean, {g.cov.matrix().trace()});
      }
      summarize_estimate(rep, g.mean);
      rep.summary.emplace_back("final_cov_trace", g.cov.matrix().trace());
      break;
    }
    case Method::kEnkf:
    case Method::kBpf:
    case Method::kOpf:
    case Method::kGopf: {
      const NonlinearModel& model = require_nonlinear(bp, cfg.method);
      Vector diag;
      Matrix means =
          filter_mean_path(cfg.method, model, data, *cfg.params.n,
                           cfg.params.obs_perturb, base, &diag);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("mean", model.state_dim()))
        rep.columns.push_back(c);
      rep.columns.push_back(cfg.method == Method::kEnkf ? "cov_trace" : "ess");
      for (int j = 0; j <= cfg.steps; ++j)
        push_row(rep, j, means.row(j).transpose(), {diag(j)});
      summarize_estimate(rep, means.row(cfg.steps).transpose());
      if (cfg.method == Method::kEnkf) {
        rep.summary.emplace_back("final_cov_trace", diag(cfg.steps));
      } else {
        rep.summary.emplace_back("mean_ess",
                                 diag.tail(cfg.steps).mean());
        rep.summary.emplace_back("min_ess",
                                 diag.tail(cfg.steps).minCoeff());
      }
      break;
    }
    case Method::kMh:
    case Method::kPcn: {
      const InverseProblem& prob = require_inverse(bp, cfg.method);
      const int dim = prob.dim;
      const int n = *cfg.params.n;
      const std::function<bool(const Vector&)> always = [](const Vector&) {
        return true;
      };
      std::function<mcmc::StepResult(const Vector&, RngStream&)> step;
      Vector offset = Vector::Zero(dim);
      Vector start;
      if (cfg.method == Method::kPcn) {
        const Gaussian& prior =
            require_gaussian_prior(prob, bp.name, cfg.method);
        offset = prior.mean;
        start = Vector::Zero(dim);
        const double beta = *cfg.params.beta;
        SpdMatrix prior_cov = prior.cov;
        std::function<double(const Vector&)> log_g =
            [prob, offset](const Vector& centered) {
              return -prob.misfit(Vector(offset + centered));
            };
        step = [prior_cov, beta, log_g, always](const Vector& u,
                                                RngStream& rng) {
          return mcmc::pcn_step(u, prior_cov, beta, log_g, always, rng);
        };
      } else {
        start = prob.gaussian_prior ? prob.gaussian_prior->mean
                                    : Vector(Vector::Zero(dim));
        mcmc::TargetDensity target{[prob](const Vector& u) {
          double lp = prob.log_prior(u);
          if (!std::isfinite(lp)) return lp;
          return lp - prob.misfit(u);
        }};
        mcmc::ProposalKernel proposal;
        const double rw = cfg.params.rw_step;
        proposal.sample = [rw, dim](const Vector& u, RngStream& rng) {
          return Vector(u + rw * rng.normals(dim));
        };
        proposal.symmetric = true;
        step = [target, proposal](const Vector& u, RngStream& rng) {
          return mcmc::mh_step(u, target, proposal, rng);
        };
      }
      rep.columns = {"segment"};
      for (auto& c : indexed_columns("u", dim)) rep.columns.push_back(c);
      rep.columns.push_back("acceptance_rate");
      RngStream chain_rng = base.at_step(1);
      const int n_segments = std::min(10, n);
      Vector state = start;
      Vector chain_sum = Vector::Zero(dim);
      double accepted = 0.0;
      int done = 0;
      for (int s = 0; s < n_segments; ++s) {
        const int len = (n - done) / (n_segments - s);
        mcmc::ChainResult seg = mcmc::run_chain(state, step, len, chain_rng);
        Vector seg_mean = seg.samples.colwise().mean().transpose();
        push_row(rep, s + 1, offset + seg_mean, {seg.acceptance_rate});
        chain_sum += seg.samples.colwise().sum().transpose();
        accepted += seg.acceptance_rate * len;
        state = seg.samples.row(len - 1).transpose();
        done += len;
      }
      summarize_estimate(rep, offset + chain_sum / n);
      rep.summary.emplace_back("acceptance_rate", accepted / n);
      break;
    }
    case Method::kEki: {
      const InverseProblem& prob = require_inverse(bp, cfg.method);
      const Gaussian& prior = require_gaussian_prior(prob, bp.name, cfg.method);
      RngStream init_rng = base.at_step(0);
      inversion::EkiState init{sample_gaussian(prior, *cfg.params.n, init_rng),
                               0};
      inversion::EkiRun run =
          inversion::eki_run(init, prob.forward, prob.noise_cov, prob.data,
                             cfg.steps, cfg.params.perturb, base);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("u", prob.dim)) rep.columns.push_back(c);
      rep.columns.push_back("mean_misfit");
      for (int s = 0; s <= cfg.steps; ++s)
        push_row(rep, s,
                 run.trajectory[s].members.colwise().mean().transpose(),
                 {run.mean_misfit(s)});
      summarize_estimate(
          rep, run.trajectory[cfg.steps].members.colwise().mean().transpose());
      rep.summary.emplace_back("final_mean_misfit",
                               run.mean_misfit(cfg.steps));
      break;
    }
    case Method::kSmc: {
      InverseProblem prob = require_inverse(bp, cfg.method);
      require_gaussian_prior(prob, bp.name, cfg.method);
      inversion::SmcTrace trace;
      inversion::TemperingSchedule schedule(cfg.params.temperatures);
      sampling::WeightedEnsemble post = inversion::smc_sample(
          prob, schedule, *cfg.params.n, cfg.params.mutations,
          *cfg.params.beta, base, &trace);
      rep.columns = {"temperature"};
      for (auto& c : indexed_columns("u", prob.dim)) rep.columns.push_back(c);
      rep.columns.push_back("ess");
      for (int j = 0; j <= schedule.J; ++j)
        push_row(rep, j, trace.mean.row(j).transpose(),
                 {j == 0 ? static_cast<double>(*cfg.params.n)
                         : trace.ess(j - 1)});
      summarize_estimate(rep, post.mean());
      rep.summary.emplace_back("min_ess", trace.ess.minCoeff());
      break;
    }
    case Method::kMap: {
      const InverseProblem& prob = require_inverse(bp, cfg.method);
      Vector init = prob.gaussian_prior
                        ? prob.gaussian_prior->mean
                        : Vector(Vector::Zero(prob.dim));
      variational::DescentOptions opts;
      opts.grad_tol = cfg.params.grad_tol;
      opts.max_iters = cfg.params.max_iters;
      variational::MapResult res =
          variational::map_estimate(prob, prob.data, init, opts);
      rep.columns = {"step"};
      for (auto& c : indexed_columns("u", prob.dim)) rep.columns.push_back(c);
      push_row(rep, 0, res.point, {});
      summarize_estimate(rep, res.point);
      rep.summary.emplace_back("objective", res.objective);
      rep.summary.emplace_back("iterations", res.iterations);
      rep.summary.emplace_back("converged", res.converged ? 1.0 : 0.0);
      break;
    }
    case Method::kGaussFit: {
      const InverseProblem& prob = require_inverse(bp, cfg.method);
      const Gaussian& prior = require_gaussian_prior(prob, bp.name, cfg.method);
      // Fit in whitened coordinates u = m + L w, where the prior becomes
      // N(0, I) and the loss is the data misfit.
      Matrix chol = prior.cov.chol_lower();
      Vector prior_mean = prior.mean;
      auto loss = [prob, prior_mean, chol](const Vector& w) {
        return prob.misfit(Vector(prior_mean + chol * w));
      };
      variational::GaussianFitOptions opts;
      opts.seed = cfg.seed;
      if (cfg.params.n) opts.panel_size = *cfg.params.n;
      opts.descent.grad_tol = cfg.params.grad_tol;
      opts.descent.max_iters = cfg.params.max_iters;
      Gaussian fit_w = variational::gaussian_fit_klpq(loss, 1.0, prob.dim,
                                                      opts);
      Vector mean = prior_mean + chol * fit_w.mean;
      Matrix cov = chol * fit_w.cov.matrix() * chol.transpose();
      rep.columns = {"step"};
      for (auto& c : indexed_columns("u", prob.dim)) rep.columns.push_back(c);
      rep.columns.push_back("cov_trace");
      push_row(rep, 0, mean, {cov.trace()});
      summarize_estimate(rep, mean);
      rep.summary.emplace_back("cov_trace", cov.trace());
      break;
    }
  }

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

// --------------------------------------------------------------- rendering

std::string render_report(const RunReport& report, const std::string& format) {
  if (format == "csv") {
    std::string out;
    out += "# config = " + report.config_echo.dump() + "\n";
    out += "# version = " + report.version + "\n";
    for (const auto& [key, value] : report.summary)
      out += "# summary " + key + " = " + fmt17(value) + "\n";
    for (std::size_t c = 0; c < report.columns.size(); ++c)
      out += (c ? "," : "") + report.columns[c];
    out += "\n";
    for (const auto& row : report.rows) {
      for (std::size_t c = 0; c < row.size(); ++c)
        out += (c ? "," : "") + fmt17(row[c]);
      out += "\n";
    }
    return out;
  }
  if (format == "json") {
    json doc;
    doc["config"] = report.config_echo;
    json rows = json::array();
    for (const auto& row : report.rows) {
      json obj;
      for (std::size_t c = 0; c < row.size() && c < report.columns.size(); ++c)
        obj[report.columns[c]] = row[c];
      rows.push_back(std::move(obj));
    }
    doc["rows"] = std::move(rows);
    json summary = json::object();
    for (const auto& [key, value] : report.summary) summary[key] = value;
    summary["wall_seconds"] = report.wall_seconds;
    doc["summary"] = std::move(summary);
    doc["version"] = report.version;
    return doc.dump(2) + "\n";
  }
  throw ConfigError("key \"format\" must be \"csv\" or \"json\"");
}

void emit_report(const RunReport& report, const std::string& format,
                 const std::string& path) {
  std::string text = render_report(report, format);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot open " + quote_key(path) +
                      " for writing: " + std::strerror(errno));
  out << text;
  if (!out)
    throw ConfigError("failed while writing " + quote_key(path) + ": " +
                      std::strerror(errno));
}

// --------------------------------------------------------------- data files

namespace {

void write_table(const std::string& path, const std::string& value_prefix,
                 const Matrix& values, int first_step) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot open " + quote_key(path) +
                      " for writing: " + std::strerror(errno));
  out << "step";
  for (long c = 0; c < values.cols(); ++c)
    out << "," << value_prefix << "_" << c + 1;
  out << "\n";
  for (long r = 0; r < values.rows(); ++r) {
    out << first_step + r;
    for (long c = 0; c < values.cols(); ++c) out << "," << fmt17(values(r, c));
    out << "\n";
  }
  if (!out)
    throw ConfigError("failed while writing " + quote_key(path) + ": " +
                      std::strerror(errno));
}

}  // namespace

void write_observations(const std::string& path, const Matrix& data) {
  write_table(path, "y", data, 1);
}

void write_truth(const std::string& path, const Matrix& truth) {
  write_table(path, "v", truth, 0);
}

Matrix read_observations(const std::string& path, int obs_dim) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open data file " + quote_key(path) + ": " +
                      std::strerror(errno));
  std::vector<Vector> rows;
  std::string line;
  bool header_seen = false;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    const std::string where =
        quote_key(path) + " line " + std::to_string(line_no);
    if (static_cast<int>(fields.size()) != obs_dim + 1)
      throw ConfigError("data file " + where + " has " +
                        std::to_string(fields.size()) + " columns; expected " +
                        std::to_string(obs_dim + 1) +
                        " (step plus one per observation component)");
    if (!header_seen) {
      if (fields[0] != "step")
        throw ConfigError("data file " + where +
                          " must start with a \"step,...\" header");
      header_seen = true;
      continue;
    }
    Vector row(obs_dim);
    for (int c = 1; c <= obs_dim; ++c) {
      try {
        std::size_t used = 0;
        row(c - 1) = std::stod(fields[c], &used);
        if (used != fields[c].size()) throw std::invalid_argument(fields[c]);
      } catch (const std::exception&) {
        throw ConfigError("data file " + where + " has a non-numeric value " +
                          quote_key(fields[c]));
      }
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen)
    throw ConfigError("data file " + quote_key(path) +
                      " has no \"step,...\" header row");
  if (rows.empty())
    throw ConfigError("data file " + quote_key(path) + " has no data rows");
  Matrix data(static_cast<long>(rows.size()), obs_dim);
  for (std::size_t r = 0; r < rows.size(); ++r)
    data.row(static_cast<long>(r)) = rows[r].transpose();
  return data;
}

// ----------------------------------------------------------------- simulate

SimulateConfig parse_simulate_config(const std::string& text) {
  json j = parse_json_text(text);
  require_object(j, "config");
  check_allowed_keys(j, "", {"model", "seed", "steps", "out", "truth_out"});
  SimulateConfig cfg;
  cfg.model = require_key(j, "model", "");
  resolve_model(cfg.model);
  cfg.seed = parse_u64(require_key(j, "seed", ""), "seed");
  if (const json* v = find_key(j, "steps"))
    cfg.steps = parse_steps_value(*v, "steps");
  if (const json* v = find_key(j, "out")) cfg.out_path = parse_string(*v, "out");
  if (const json* v = find_key(j, "truth_out"))
    cfg.truth_path = parse_string(*v, "truth_out");
  return cfg;
}

models::SyntheticRun run_simulate(const SimulateConfig& cfg) {
  models::BenchmarkProblem bp = resolve_model(cfg.model);
  RngStream rng(cfg.seed, 0);
  if (bp.linear) return models::simulate(*bp.linear, cfg.steps, rng);
  if (bp.nonlinear) return models::simulate(*bp.nonlinear, cfg.steps, rng);
  throw ConfigError("model " + quote_key(bp.name) +
                    " has no state-space view to simulate");
}

// ------------------------------------------------------------------ compare

CompareConfig parse_compare_config(const std::string& text) {
  json j = parse_json_text(text);
  require_object(j, "config");
  check_allowed_keys(j, "",
                     {"methods", "model", "seed", "steps", "data", "params",
                      "out", "format"});
  CompareConfig cfg;
  const json& methods = require_key(j, "methods", "");
  if (!methods.is_array() || methods.size() < 2)
    throw ConfigError(
        "key \"methods\" must be an array of at least two method names");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    Method m = method_from_name(parse_string(
        methods[i], "methods[" + std::to_string(i) + "]"));
    for (Method seen : cfg.methods)
      if (seen == m)
        throw ConfigError("key \"methods\" lists " +
                          quote_key(method_name(m)) + " twice");
    cfg.methods.push_back(m);
  }
  cfg.model = require_key(j, "model", "");
  resolve_model(cfg.model);
  cfg.seed = parse_u64(require_key(j, "seed", ""), "seed");
  if (const json* v = find_key(j, "steps"))
    cfg.steps = parse_steps_value(*v, "steps");
  if (const json* v = find_key(j, "data"))
    cfg.data_path = parse_string(*v, "data");
  cfg.params = parse_params(j);
  for (Method m : cfg.methods) validate_method_params(m, cfg.params);
  if (const json* v = find_key(j, "out"))
    cfg.out_path = parse_string(*v, "out");
  if (const json* v = find_key(j, "format"))
    cfg.format = parse_format_value(*v, "format");
  return cfg;
}

RunReport compare_experiment(const CompareConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  models::BenchmarkProblem bp = resolve_model(cfg.model);
  const int dim = estimate_dim(cfg.methods.front(), bp);
  for (Method m : cfg.methods)
    if (estimate_dim(m, bp) != dim)
      throw ConfigError("methods estimate quantities of different dimension "
                        "and cannot be compared");

  // Identical model, seed, and horizon give every run identical simulated
  // data (phase 0 of the seed), so this is a shared-data comparison.
  std::vector<RunReport> reports;
  for (Method m : cfg.methods) {
    ExperimentConfig sub;
    sub.method = m;
    sub.model = cfg.model;
    sub.seed = cfg.seed;
    sub.steps = cfg.steps;
    sub.data_path = cfg.data_path;
    sub.params = cfg.params;
    sub.format = cfg.format;
    reports.push_back(run_experiment(sub));
  }

  RunReport rep;
  json echo;
  json names = json::array();
  for (Method m : cfg.methods) names.push_back(method_name(m));
  echo["methods"] = names;
  echo["model"] = cfg.model;
  echo["seed"] = cfg.seed;
  echo["steps"] = cfg.steps;
  if (cfg.data_path) echo["data"] = *cfg.data_path;
  echo["params"] = params_to_json(cfg.params);
  echo["format"] = cfg.format;
  rep.config_echo = echo;
  rep.version = DASSIM_VERSION_STRING;

  rep.columns = {"step"};
  for (std::size_t i = 1; i < cfg.methods.size(); ++i)
    rep.columns.push_back("gap_" + method_name(cfg.methods[i]));

  // Row r of each report carries (index, estimate_1..dim, ...); gaps are
  // tabulated at index values every method reported.
  std::vector<std::unordered_map<double, std::size_t>> by_step(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i)
    for (std::size_t r = 0; r < reports[i].rows.size(); ++r)
      by_step[i].emplace(reports[i].rows[r][0], r);
  std::vector<double> gap_sums(cfg.methods.size() - 1, 0.0);
  for (const auto& ref_row : reports.front().rows) {
    const double step = ref_row[0];
    bool everywhere = true;
    for (std::size_t i = 1; i < reports.size() && everywhere; ++i)
      everywhere = by_step[i].count(step) > 0;
    if (!everywhere) continue;
    std::vector<double> row{step};
    for (std::size_t i = 1; i < reports.size(); ++i) {
      const auto& other = reports[i].rows[by_step[i].at(step)];
      double sq = 0.0;
      for (int c = 1; c <= dim; ++c) {
        const double diff = other[c] - ref_row[c];
        sq += diff * diff;
      }
      row.push_back(std::sqrt(sq));
      gap_sums[i - 1] += std::sqrt(sq);
    }
    rep.rows.push_back(std::move(row));
  }
  if (!rep.rows.empty()) {
    for (std::size_t i = 1; i < cfg.methods.size(); ++i) {
      const std::string name = method_name(cfg.methods[i]);
      rep.summary.emplace_back("mean_gap_" + name,
                               gap_sums[i - 1] / rep.rows.size());
      rep.summary.emplace_back("final_gap_" + name, rep.rows.back()[i]);
    }
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

// -------------------------------------------------------------------- bench

BenchConfig parse_bench_config(const std::string& text) {
  json j = parse_json_text(text);
  require_object(j, "config");
  check_allowed_keys(j, "",
                     {"method", "model", "seed", "steps", "ensemble_sizes",
                      "n_seeds", "params", "out", "format"});
  BenchConfig cfg;
  cfg.method = method_from_name(
      parse_string(require_key(j, "method", ""), "method"));
  if (cfg.method != Method::kEnkf && !is_particle_filter(cfg.method))
    throw ConfigError("bench supports the ensemble and particle filters "
                      "(enkf, bpf, opf, gopf); got " +
                      quote_key(method_name(cfg.method)));
  cfg.model = require_key(j, "model", "");
  resolve_model(cfg.model);
  cfg.seed = parse_u64(require_key(j, "seed", ""), "seed");
  if (const json* v = find_key(j, "steps"))
    cfg.steps = parse_steps_value(*v, "steps");
  const json& sizes = require_key(j, "ensemble_sizes", "");
  if (!sizes.is_array() || sizes.size() < 2)
    throw ConfigError(
        "key \"ensemble_sizes\" must be an array of at least two sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    int n = parse_int(sizes[i], "ensemble_sizes[" + std::to_string(i) + "]");
    if (n < 1)
      throw ConfigError("key \"ensemble_sizes\" entries must be >= 1");
    if (!cfg.ensemble_sizes.empty() && n <= cfg.ensemble_sizes.back())
      throw ConfigError(
          "key \"ensemble_sizes\" must be strictly increasing");
    cfg.ensemble_sizes.push_back(n);
  }
  if (const json* v = find_key(j, "n_seeds")) {
    cfg.n_seeds = parse_int(*v, "n_seeds");
    if (cfg.n_seeds < 1) throw ConfigError("key \"n_seeds\" must be >= 1");
  }
  cfg.params = parse_params(j);
  if (const json* v = find_key(j, "out"))
    cfg.out_path = parse_string(*v, "out");
  if (const json* v = find_key(j, "format"))
    cfg.format = parse_format_value(*v, "format");
  return cfg;
}

RunReport bench_experiment(const BenchConfig& cfg, int threads) {
  if (threads < 1)
    throw ConfigError("bench needs a positive thread count");
  const auto t0 = std::chrono::steady_clock::now();
  models::BenchmarkProblem bp = resolve_model(cfg.model);
  const kalman::LinearModel& lm = require_linear(bp, cfg.method);
  const NonlinearModel& model = require_nonlinear(bp, cfg.method);
  const int n_sizes = static_cast<int>(cfg.ensemble_sizes.size());
  const int cells = n_sizes * cfg.n_seeds;

  // Cell (size index i, seed index s): simulate data with seed+s, filter with
  // ensemble_sizes[i], and record the per-step mean-square gap to the exact
  // Kalman mean. Each cell draws only from its own seed, so the assembly is
  // identical for every thread count. A cell reproduces `run` with the same
  // model, N, and seed+s.
  std::vector<double> gap_sq(cells, 0.0);
  auto run_cell = [&](int cell) {
    const int i = cell / cfg.n_seeds;
    const int s = cell % cfg.n_seeds;
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
    models::SyntheticRun sim =
        models::simulate(lm, cfg.steps, RngStream(seed, 0));
    kalman::FilterTrace oracle = kalman::kalman_filter(lm, sim.data);
    Matrix means = filter_mean_path(cfg.method, model, sim.data,
                                    cfg.ensemble_sizes[i],
                                    cfg.params.obs_perturb,
                                    RngStream(seed, 1), nullptr);
    double acc = 0.0;
    for (int j = 1; j <= cfg.steps; ++j)
      acc +=
          (means.row(j).transpose() - oracle.updated[j].mean).squaredNorm();
    gap_sq[cell] = acc / cfg.steps;
  };

  const int workers = std::min(threads, cells);
  if (workers == 1) {
    for (int cell = 0; cell < cells; ++cell) run_cell(cell);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int cell = w; cell < cells; cell += workers) run_cell(cell);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  RunReport rep;
  json echo;
  echo["method"] = method_name(cfg.method);
  echo["model"] = cfg.model;
  echo["seed"] = cfg.seed;
  echo["steps"] = cfg.steps;
  echo["ensemble_sizes"] = cfg.ensemble_sizes;
  echo["n_seeds"] = cfg.n_seeds;
  echo["params"] = params_to_json(cfg.params);
  echo["format"] = cfg.format;
  rep.config_echo = echo;
  rep.version = DASSIM_VERSION_STRING;
  rep.columns = {"N", "rms_gap"};

  Vector log_n(n_sizes), log_rms(n_sizes);
  for (int i = 0; i < n_sizes; ++i) {
    double mean_sq = 0.0;
    for (int s = 0; s < cfg.n_seeds; ++s)
      mean_sq += gap_sq[i * cfg.n_seeds + s];
    mean_sq /= cfg.n_seeds;
    const double rms = std::sqrt(mean_sq);
    rep.rows.push_back({static_cast<double>(cfg.ensemble_sizes[i]), rms});
    log_n(i) = std::log(static_cast<double>(cfg.ensemble_sizes[i]));
    log_rms(i) = std::log(rms);
  }
  const double xbar = log_n.mean();
  const double ybar = log_rms.mean();
  const double slope = (log_n.array() - xbar).matrix().dot(
                           (log_rms.array() - ybar).matrix()) /
                       (log_n.array() - xbar).matrix().squaredNorm();
  rep.summary.emplace_back("slope", slope);
  rep.summary.emplace_back("n_seeds", cfg.n_seeds);
  rep.summary.emplace_back("steps", cfg.steps);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

}  // namespace dassim::harness
