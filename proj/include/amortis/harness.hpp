#pragma once
// Experiment harness. A "run" is one seeded end-to-end experiment living in
// its own directory; stages append what they know to run.json and drop their
// artifacts next to it:
//
//   run_dir/dataset/{meta.json,thetas.csv,ys.csv}   simulate
//   run_dir/checkpoint.{bin,json} train_report.json train
//   run_dir/observation.json samples_<seed>.csv     sample
//   run_dir/metrics_<seed>.json oracle_samples.csv  evaluate
//   run_dir/plots/*.csv plots/meta.json             evaluate
//
// `pipeline` chains the stages for several seeds under one root and writes
// report.json; `report` aggregates existing runs and refuses to mix
// configurations. Identical configs and seeds reproduce every artifact byte
// for byte (wall-clock fields live only in train_report.json).

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "amortis/metrics.hpp"
#include "amortis/models.hpp"
#include "amortis/oracles.hpp"
#include "amortis/sims.hpp"
#include "amortis/train.hpp"

namespace amortis::harness {

// The observed data point: a prior draw theta* (from its own seed stream) and
// one simulation from it.
struct Observation {
  Vec theta_true;
  Vec y0;
  std::uint64_t obs_seed = 0;
};

Observation make_observation(const sims::SimTask& task, std::uint64_t obs_seed);

struct PpcResult {
  std::optional<double> ratio;  // posterior / prior median scaled distance
  double posterior_median = 0.0;
  double prior_median = 0.0;
  double failed_posterior_fraction = 0.0;  // simulator errors, excluded
  double failed_prior_fraction = 0.0;
};

// Reference-free check: simulate y from posterior draws and from fresh prior
// draws, compare median distances to y0 in the scaled observation space.
PpcResult posterior_predictive_check(const sims::SimTask& task, const Matrix& theta_posterior,
                                     std::span<const double> y0,
                                     const sims::StandardScaler& y_scaler, std::uint64_t seed);

// Reference posterior sampling for the tasks that have one (two_moons,
// gaussian_linear, gaussian_linear_uniform, gaussian_mixture); nullopt for
// the rest. Deterministic given (task, y0, n, seed).
std::optional<Matrix> reference_posterior_sample(const sims::SimTask& task,
                                                 std::span<const double> y0, std::size_t n,
                                                 std::uint64_t seed,
                                                 std::size_t grid_resolution = 512);

// --- stage entry points (shared by the CLI and the test suites) -------------

void run_simulate(const std::string& run_dir, sims::TaskId task, std::size_t budget,
                  std::uint64_t run_seed);
void run_train(const std::string& run_dir, models::ModelKind kind,
               const train::TrainConfig& cfg_template);
void run_sample(const std::string& run_dir, std::size_t n_samples, std::uint64_t obs_seed);
nlohmann::json run_evaluate(const std::string& run_dir, std::size_t grid_resolution = 512);
nlohmann::json run_report(const std::string& out_root);

struct PipelineConfig {
  sims::TaskId task = sims::TaskId::TwoMoons;
  models::ModelKind model = models::ModelKind::CpVae;
  std::size_t budget = 10000;
  std::size_t n_samples = 10000;
  std::uint64_t obs_seed = 101;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::optional<train::TrainConfig> train_overrides;  // seed ignored
  std::size_t grid_resolution = 512;
};

// Runs every seed end to end under out_root/run_seed<k>/ and aggregates.
nlohmann::json run_pipeline(const std::string& out_root, const PipelineConfig& cfg);

// CLI entry: parses argv (sub-commands simulate / train / sample / evaluate /
// report / pipeline), executes, returns a process exit code. Failures print a
// machine-readable JSON error record to stderr.
int cli_dispatch(int argc, const char* const* argv);

// Output root resolution: explicit flag > AMORTIS_OUT env var > ./amortis_out.
std::string resolve_out_root(const std::string& flag_value);

}  // namespace amortis::harness
