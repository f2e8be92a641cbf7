#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dassim/models.hpp"
#include "dassim/types.hpp"

namespace dassim::harness {

using json = nlohmann::json;

// Every estimator the library exposes; the CLI dispatches on this enum and a
// coverage test enumerates it.
enum class Method {
  kKf,
  kKs,
  k3dvar,
  k4dvar,
  kW4dvar,
  kExkf,
  kEnkf,
  kBpf,
  kOpf,
  kGopf,
  kMh,
  kPcn,
  kEki,
  kSmc,
  kMap,
  kGaussFit,
};

// All methods with their config names, in enum order.
const std::vector<std::pair<Method, std::string>>& method_table();
std::string method_name(Method method);
// Throws ConfigError listing the valid names.
Method method_from_name(const std::string& name);

// Method-specific knobs; parse_config enforces per-method requiredness
// (N for sample-based methods, beta for pCN-based ones) and leaves the rest
// at these defaults.
struct MethodParams {
  std::optional<int> n;        // ensemble / particle count, chain length
  std::optional<double> beta;  // pCN proposal mixing, in (0, 1]
  int temperatures = 10;       // tempering ladder length
  int mutations = 1;           // pCN mutation moves per temperature
  int obs_perturb = 1;         // perturbed-observation flag (0 or 1)
  bool perturb = false;        // ensemble-inversion data perturbation
  double rw_step = 0.5;        // random-walk proposal stddev
  double grad_tol = 1e-8;      // descent gradient tolerance
  int max_iters = 10000;       // descent iteration cap

  bool operator==(const MethodParams&) const = default;
};

// One experiment: a method, a model (benchmark name or inline spec), a seed,
// and method parameters. `steps` is the assimilation horizon J (or iteration
// count for ensemble inversion); when `data_path` is set the observations are
// loaded instead of simulated and `steps` is taken from the file.
struct ExperimentConfig {
  Method method = Method::kKf;
  json model;
  std::uint64_t seed = 0;
  int steps = 10;
  std::optional<std::string> data_path;
  MethodParams params;
  std::optional<std::string> out_path;
  std::string format = "csv";

  bool operator==(const ExperimentConfig&) const = default;
};

// Parses and validates a JSON experiment config. Errors name the offending
// key path ("params.N", "model.M", ...); unknown methods list the valid ones.
ExperimentConfig parse_config(const std::string& text);

// Resolved config as JSON with defaults applied; parse(emit(parse(t)))
// equals parse(t).
json config_to_json(const ExperimentConfig& cfg);
std::string emit_config(const ExperimentConfig& cfg);

// Builds the model a config names: a benchmark name, a benchmark modifier
// object {"name", "gamma_scale"?, "sigma_scale"?} rescaling the noise
// covariances, or an inline linear-Gaussian spec {"kind": "linear", "M", "H",
// "Sigma", "Gamma", "m0", "C0"}.
models::BenchmarkProblem resolve_model(const json& model);

// Structured experiment output: one row per assimilation step, chain
// segment, or temperature, plus named scalar summaries and the resolved
// config echo. Wall time is reported in JSON only so CSV reruns are
// byte-identical.
struct RunReport {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, double>> summary;
  json config_echo;
  std::string version;
  double wall_seconds = 0.0;
};

// Simulates (or loads) data, dispatches to the configured method, and
// collects per-step summaries. Deterministic per (config, seed): data draws
// come from phase 0 of the seed and method draws from phase 1.
RunReport run_experiment(const ExperimentConfig& cfg);

// CSV ("# "-prefixed config/summary comments, fixed header order, %.17g
// floats) or JSON (top-level keys config, rows, summary, version; shortest
// round-trip floats).
std::string render_report(const RunReport& report, const std::string& format);
void emit_report(const RunReport& report, const std::string& format,
                 const std::string& path);

// Observation files: header "step,y_1..y_k", one row per step j = 1..J.
// Truth files: header "step,v_1..v_d", rows j = 0..J.
void write_observations(const std::string& path, const Matrix& data);
void write_truth(const std::string& path, const Matrix& truth);
// Reads an observation file back, validating the column count.
Matrix read_observations(const std::string& path, int obs_dim);

// `simulate` subcommand: synthesize a run and write observation (and
// optionally truth) files.
struct SimulateConfig {
  json model;
  std::uint64_t seed = 0;
  int steps = 10;
  std::optional<std::string> out_path;
  std::optional<std::string> truth_path;

  bool operator==(const SimulateConfig&) const = default;
};

SimulateConfig parse_simulate_config(const std::string& text);
models::SyntheticRun run_simulate(const SimulateConfig& cfg);

// `compare` subcommand: runs two or more methods on shared data (identical
// model, seed, and horizon, hence identical simulated observations) and
// tabulates per-step gaps |estimate_m - estimate_ref| against the first
// method, the reference.
struct CompareConfig {
  std::vector<Method> methods;
  json model;
  std::uint64_t seed = 0;
  int steps = 10;
  std::optional<std::string> data_path;
  MethodParams params;
  std::optional<std::string> out_path;
  std::string format = "csv";

  bool operator==(const CompareConfig&) const = default;
};

CompareConfig parse_compare_config(const std::string& text);
RunReport compare_experiment(const CompareConfig& cfg);

// `bench` subcommand: N-rate study of an ensemble or particle filter against
// the exact Kalman oracle on a linear-Gaussian model. For each ensemble size
// and each of n_seeds seeds, the cell statistic is the per-step RMS gap of
// the filter mean to the Kalman mean; rows hold the per-size RMS over seeds
// and the summary holds the fitted log-log slope.
struct BenchConfig {
  Method method = Method::kBpf;
  json model;
  std::uint64_t seed = 0;
  int steps = 10;
  std::vector<int> ensemble_sizes;
  int n_seeds = 20;
  MethodParams params;
  std::optional<std::string> out_path;
  std::string format = "csv";

  bool operator==(const BenchConfig&) const = default;
};

BenchConfig parse_bench_config(const std::string& text);
// Cells fan out across `threads` workers; each (size, seed) cell draws from
// its own seed so the assembled report does not depend on the thread count.
RunReport bench_experiment(const BenchConfig& cfg, int threads = 1);

}  // namespace dassim::harness
