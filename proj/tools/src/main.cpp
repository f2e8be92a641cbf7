#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dassim/error.hpp"
#include "dassim/harness.hpp"

namespace {

namespace hn = dassim::harness;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw dassim::ConfigError("cannot open config file \"" + path +
                              "\": " + std::strerror(errno));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared --seed/--out/--format overrides; a flag beats the config value.
struct Overrides {
  std::uint64_t seed = 0;
  std::string out;
  std::string format;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* format_opt = nullptr;
};

Overrides add_overrides(CLI::App& cmd, bool with_format = true) {
  Overrides o;
  o.seed_opt = cmd.add_option("--seed", o.seed,
                              "Override the seed from the config");
  o.out_opt = cmd.add_option("--out", o.out,
                             "Write the report here instead of stdout");
  if (with_format)
    o.format_opt = cmd.add_option("--format", o.format, "Report format")
                       ->check(CLI::IsMember({"csv", "json"}));
  return o;
}

void deliver(const hn::RunReport& report, const std::string& format,
             const std::optional<std::string>& out_path) {
  if (out_path)
    hn::emit_report(report, format, *out_path);
  else
    std::cout << hn::render_report(report, format);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Bayesian inversion and data assimilation experiments: simulate "
      "synthetic data, run estimators, compare them on shared data, and fit "
      "error-vs-ensemble-size rates."};
  app.require_subcommand(1);

  std::string run_config, sim_config, cmp_config, bench_config;
  std::string truth_out;
  int threads = 1;

  CLI::App* run_cmd = app.add_subcommand(
      "run", "Run one estimator and report per-step diagnostics");
  run_cmd->add_option("--config", run_config, "JSON experiment config")
      ->required();
  Overrides run_over = add_overrides(*run_cmd);

  CLI::App* sim_cmd = app.add_subcommand(
      "simulate", "Simulate a model and write observation/truth CSV files");
  sim_cmd->add_option("--config", sim_config, "JSON simulation config")
      ->required();
  Overrides sim_over = add_overrides(*sim_cmd, /*with_format=*/false);
  CLI::Option* truth_opt = sim_cmd->add_option(
      "--truth-out", truth_out, "Also write the truth path here");

  CLI::App* cmp_cmd = app.add_subcommand(
      "compare", "Run several estimators on shared data and tabulate gaps "
                 "to the first");
  cmp_cmd->add_option("--config", cmp_config, "JSON comparison config")
      ->required();
  Overrides cmp_over = add_overrides(*cmp_cmd);

  CLI::App* bench_cmd = app.add_subcommand(
      "bench", "Error-vs-ensemble-size study with a log-log slope fit");
  bench_cmd->add_option("--config", bench_config, "JSON bench config")
      ->required();
  Overrides bench_over = add_overrides(*bench_cmd);
  bench_cmd->add_option("--threads", threads, "Worker threads for bench cells")
      ->check(CLI::Range(1, 1024));

  try {
    app.parse(argc, argv);

    if (*run_cmd) {
      hn::ExperimentConfig cfg = hn::parse_config(read_file(run_config));
      if (run_over.seed_opt->count()) cfg.seed = run_over.seed;
      if (run_over.out_opt->count()) cfg.out_path = run_over.out;
      if (run_over.format_opt->count()) cfg.format = run_over.format;
      deliver(hn::run_experiment(cfg), cfg.format, cfg.out_path);
    } else if (*sim_cmd) {
      hn::SimulateConfig cfg = hn::parse_simulate_config(read_file(sim_config));
      if (sim_over.seed_opt->count()) cfg.seed = sim_over.seed;
      if (sim_over.out_opt->count()) cfg.out_path = sim_over.out;
      if (truth_opt->count()) cfg.truth_path = truth_out;
      if (!cfg.out_path)
        throw dassim::ConfigError(
            "simulate needs an observation output path (--out or config "
            "key \"out\")");
      dassim::models::SyntheticRun run = hn::run_simulate(cfg);
      hn::write_observations(*cfg.out_path, run.data);
      if (cfg.truth_path) hn::write_truth(*cfg.truth_path, run.truth);
    } else if (*cmp_cmd) {
      hn::CompareConfig cfg = hn::parse_compare_config(read_file(cmp_config));
      if (cmp_over.seed_opt->count()) cfg.seed = cmp_over.seed;
      if (cmp_over.out_opt->count()) cfg.out_path = cmp_over.out;
      if (cmp_over.format_opt->count()) cfg.format = cmp_over.format;
      deliver(hn::compare_experiment(cfg), cfg.format, cfg.out_path);
    } else if (*bench_cmd) {
      hn::BenchConfig cfg = hn::parse_bench_config(read_file(bench_config));
      if (bench_over.seed_opt->count()) cfg.seed = bench_over.seed;
      if (bench_over.out_opt->count()) cfg.out_path = bench_over.out;
      if (bench_over.format_opt->count()) cfg.format = bench_over.format;
      deliver(hn::bench_experiment(cfg, threads), cfg.format, cfg.out_path);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const dassim::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dassim::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
