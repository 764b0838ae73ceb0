#include "amortis/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "amortis/io.hpp"

namespace amortis::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stage-specific seed streams derived from the run seed.
constexpr std::uint64_t kDatasetStream = 0xD5;
constexpr std::uint64_t kTrainStream = 0x7A;
constexpr std::uint64_t kSampleStream = 0x5A;
constexpr std::uint64_t kMetricStream = 0x3E;
constexpr std::uint64_t kPpcStream = 0x9C;
constexpr std::uint64_t kOracleStream = 0x0A;

std::string run_json_path(const std::string& run_dir) { return run_dir + "/run.json"; }

json load_run_state(const std::string& run_dir) {
  const std::string path = run_json_path(run_dir);
  if (!io::file_exists(path)) fail("missing " + path + " (run the earlier stages first)");
  return json::parse(io::read_file(path));
}

void save_run_state(const std::string& run_dir, const json& state) {
  io::write_file(run_json_path(run_dir), state.dump(2) + "\n");
}

std::uint64_t require_u64(const json& state, const char* key) {
  if (!state.contains(key)) fail(std::string("run.json is missing '") + key + "'");
  return state.at(key).get<std::uint64_t>();
}

std::string require_str(const json& state, const char* key) {
  if (!state.contains(key)) fail(std::string("run.json is missing '") + key + "'");
  return state.at(key).get<std::string>();
}

json train_config_echo(const train::TrainConfig& cfg) {
  json j;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["improvement_tol"] = cfg.improvement_tol;
  j["clip_norm"] = cfg.clip_norm;
  j["val_fraction"] = cfg.val_fraction;
  j["weight_decay"] = cfg.weight_decay;
  return j;
}

train::TrainConfig train_config_from_echo(const json& j) {
  train::TrainConfig cfg;
  cfg.lr = j.at("lr").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.max_epochs = j.at("max_epochs").get<std::size_t>();
  cfg.patience = j.at("patience").get<std::size_t>();
  cfg.improvement_tol = j.at("improvement_tol").get<double>();
  cfg.clip_norm = j.at("clip_norm").get<double>();
  cfg.val_fraction = j.at("val_fraction").get<double>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  return cfg;
}

// The run-identifying configuration (everything except the run seed); its
// hash guards report aggregation against mixing configurations.
json config_echo_from_state(const json& state) {
  json echo;
  echo["task"] = require_str(state, "task");
  echo["model"] = require_str(state, "model");
  echo["budget"] = require_u64(state, "budget");
  echo["n_samples"] = require_u64(state, "n_samples");
  echo["obs_seed"] = require_u64(state, "obs_seed");
  echo["grid_resolution"] = require_u64(state, "grid_resolution");
  if (!state.contains("train")) fail("run.json is missing 'train'");
  echo["train"] = state.at("train");
  return echo;
}

std::string hash_of_echo(const json& echo) { return hex64(fnv1a64_str(echo.dump())); }

double median_of(Vec values) {
  if (values.empty()) fail("median_of: empty");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double med = values[mid];
  if (values.size() % 2 == 0) {
    const double lower =
        *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

void write_samples_csv(const std::string& path, const Matrix& samples, const json& meta,
                       const std::string& meta_path) {
  io::write_file(path, io::matrix_to_csv(samples));
  io::write_file(meta_path, meta.dump(2) + "\n");
}

}  // namespace

Observation make_observation(const sims::SimTask& task, std::uint64_t obs_seed) {
  Rng rng(mix_seed(obs_seed, 0x0B5));
  Observation obs;
  obs.obs_seed = obs_seed;
  obs.theta_true = sims::prior_sample(task, rng);
  obs.y0 = sims::simulate(task, obs.theta_true, rng);
  return obs;
}

PpcResult posterior_predictive_check(const sims::SimTask& task, const Matrix& theta_posterior,
                                     std::span<const double> y0,
                                     const sims::StandardScaler& y_scaler, std::uint64_t seed) {
  if (theta_posterior.rows == 0) fail("posterior_predictive_check: no posterior draws");
  if (theta_posterior.cols != task.theta_dim)
    fail("posterior_predictive_check: theta dim mismatch");
  if (y0.size() != task.y_dim) fail("posterior_predictive_check: y0 dim mismatch");

  const Vec y0_scaled = sims::scale_row(y_scaler, y0);
  const Rng base(mix_seed(seed, 0x99C));
  const std::size_t n = theta_posterior.rows;

  auto scaled_distance = [&](const Vec& y) {
    const Vec ys = sims::scale_row(y_scaler, y);
    double sq = 0.0;
    for (std::size_t c = 0; c < ys.size(); ++c) {
      const double d = ys[c] - y0_scaled[c];
      sq += d * d;
    }
    return std::sqrt(sq);
  };

  Vec post_dist, prior_dist;
  post_dist.reserve(n);
  prior_dist.reserve(n);
  std::size_t post_failed = 0, prior_failed = 0;

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = base.derive(2 * i);
    try {
      const Vec y = sims::simulate(task, theta_posterior.row(i), rng);
      post_dist.push_back(scaled_distance(y));
    } catch (const sims::SimError&) {
      ++post_failed;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = base.derive(2 * i + 1);
    try {
      const Vec theta = sims::prior_sample(task, rng);
      const Vec y = sims::simulate(task, theta, rng);
      prior_dist.push_back(scaled_distance(y));
    } catch (const sims::SimError&) {
      ++prior_failed;
    }
  }

  PpcResult res;
  res.failed_posterior_fraction = static_cast<double>(post_failed) / static_cast<double>(n);
  res.failed_prior_fraction = static_cast<double>(prior_failed) / static_cast<double>(n);
  if (!post_dist.empty() && !prior_dist.empty()) {
    res.posterior_median = median_of(post_dist);
    res.prior_median = median_of(prior_dist);
    if (res.prior_median > 0.0) res.ratio = res.posterior_median / res.prior_median;
  }
  return res;
}

std::optional<Matrix> reference_posterior_sample(const sims::SimTask& task,
                                                 std::span<const double> y0, std::size_t n,
                                                 std::uint64_t seed,
                                                 std::size_t grid_resolution) {
  Rng rng(mix_seed(seed, 0x0AC1E));
  switch (task.id) {
    case sims::TaskId::TwoMoons: {
      const auto grid = oracles::two_moons_grid_posterior(y0, grid_resolution);
      return oracles::grid_sample(grid, n, rng);
    }
    case sims::TaskId::GaussianLinear: {
      const auto post =
          oracles::conjugate_gaussian_posterior(y0, sims::kGaussPriorVar, sims::kGaussLikVar);
      return oracles::sample_diag(post, n, rng);
    }
    case sims::TaskId::GaussianLinearUniform:
      return oracles::truncated_normal_posterior_sample(y0, sims::kGaussLikVar, -1.0, 1.0, n,
                                                        rng);
    case sims::TaskId::GaussianMixture: {
      const auto grid = oracles::gmm_grid_posterior(y0, grid_resolution);
      return oracles::grid_sample(grid, n, rng);
    }
    default:
      return std::nullopt;
  }
}

void run_simulate(const std::string& run_dir, sims::TaskId task, std::size_t budget,
                  std::uint64_t run_seed) {
  io::ensure_dir(run_dir);
  const sims::SimTask t = sims::make_task(task);
  const sims::Dataset ds = sims::generate_dataset(t, budget, mix_seed(run_seed, kDatasetStream));
  sims::save_dataset(ds, run_dir + "/dataset");

  json state;
  if (io::file_exists(run_json_path(run_dir))) {
    state = load_run_state(run_dir);
    if (state.contains("run_seed") && state.at("run_seed").get<std::uint64_t>() != run_seed)
      fail("run_simulate: " + run_dir + " already belongs to a different run seed");
  }
  state["format_version"] = 1;
  state["run_seed"] = run_seed;
  state["task"] = sims::task_name(task);
  state["budget"] = budget;
  state["dataset_hash"] = sims::dataset_hash(ds);
  save_run_state(run_dir, state);
}

void run_train(const std::string& run_dir, models::ModelKind kind,
               const train::TrainConfig& cfg_template) {
  json state = load_run_state(run_dir);
  const std::uint64_t run_seed = require_u64(state, "run_seed");
  const sims::TaskId task = sims::task_from_name(require_str(state, "task"));
  const sims::Dataset ds = sims::load_dataset(run_dir + "/dataset");
  if (ds.task != task) fail("run_train: dataset task disagrees with run.json");

  train::TrainConfig cfg = cfg_template;
  cfg.seed = mix_seed(run_seed, kTrainStream);
  const train::TrainedModel tm = train::train_model(kind, ds, cfg);
  train::save_checkpoint(tm, task, run_dir + "/checkpoint.bin", run_dir + "/checkpoint.json");

  json report;
  report["epochs_run"] = tm.report.val_loss.size();
  report["best_epoch"] = tm.report.best_epoch;
  report["best_val_loss"] = tm.report.best_val;
  report["stopped_early"] = tm.report.stopped_early;
  report["clipped_steps"] = tm.report.clipped_steps;
  report["total_steps"] = tm.report.total_steps;
  report["train_loss"] = tm.report.train_loss;
  report["val_loss"] = tm.report.val_loss;
  report["wall_seconds"] = tm.report.wall_seconds;
  report["cpu_seconds"] = tm.report.cpu_seconds;
  io::write_file(run_dir + "/train_report.json", report.dump(2) + "\n");

  state["model"] = models::model_kind_name(kind);
  state["train"] = train_config_echo(cfg);
  save_run_state(run_dir, state);
}

void run_sample(const std::string& run_dir, std::size_t n_samples, std::uint64_t obs_seed) {
  if (n_samples == 0) fail("run_sample: need n_samples > 0");
  json state = load_run_state(run_dir);
  const std::uint64_t run_seed = require_u64(state, "run_seed");
  const sims::TaskId task_id = sims::task_from_name(require_str(state, "task"));
  const auto cp = train::load_checkpoint(run_dir + "/checkpoint.bin", run_dir + "/checkpoint.json");
  if (cp.task != task_id) fail("run_sample: checkpoint task disagrees with run.json");

  const sims::SimTask task = sims::make_task(task_id);
  const Observation obs = make_observation(task, obs_seed);

  json obs_json;
  obs_json["obs_seed"] = obs_seed;
  obs_json["theta_true"] = obs.theta_true;
  obs_json["y0"] = obs.y0;
  io::write_file(run_dir + "/observation.json", obs_json.dump(2) + "\n");

  const Vec y0_scaled = sims::scale_row(cp.y_scaler, obs.y0);
  Rng rng(mix_seed(run_seed, kSampleStream));
  const Matrix theta_scaled = models::model_sample(cp.model, y0_scaled, n_samples, rng);
  const Matrix theta = sims::unscale(cp.theta_scaler, theta_scaled);
  if (!all_finite(theta)) fail("run_sample: non-finite posterior draws");

  json meta;
  meta["seed"] = run_seed;
  meta["count"] = n_samples;
  meta["task"] = sims::task_name(task_id);
  meta["source"] = std::string("model:") + models::model_kind_name(models::model_kind(cp.model));
  const std::string tag = std::to_string(run_seed);
  write_samples_csv(run_dir + "/samples_" + tag + ".csv", theta, meta,
                    run_dir + "/samples_" + tag + ".meta.json");

  state["n_samples"] = n_samples;
  state["obs_seed"] = obs_seed;
  save_run_state(run_dir, state);
}

namespace {

// 50-bin marginal and pairwise histograms over the union range of the model
// samples and (when present) the reference samples, with shared binning so
// overlays line up.
void emit_plot_data(const std::string& run_dir, const Matrix& samples, const Matrix* reference) {
  const std::string dir = run_dir + "/plots";
  io::ensure_dir(dir);
  const std::size_t bins = 50;
  const std::size_t d = samples.cols;

  Vec lo(d, 0.0), hi(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double mn = samples(0, c), mx = samples(0, c);
    for (std::size_t r = 0; r < samples.rows; ++r) {
      mn = std::min(mn, samples(r, c));
      mx = std::max(mx, samples(r, c));
    }
    if (reference)
      for (std::size_t r = 0; r < reference->rows; ++r) {
        mn = std::min(mn, (*reference)(r, c));
        mx = std::max(mx, (*reference)(r, c));
      }
    if (!(mx > mn)) {
      mn -= 0.5;
      mx += 0.5;
    }
    lo[c] = mn;
    hi[c] = mx;
  }

  auto bin_of = [&](double x, std::size_t c) {
    const double w = (hi[c] - lo[c]) / static_cast<double>(bins);
    auto b = static_cast<std::ptrdiff_t>((x - lo[c]) / w);
    if (b < 0) b = 0;
    if (b >= static_cast<std::ptrdiff_t>(bins)) b = static_cast<std::ptrdiff_t>(bins) - 1;
    return static_cast<std::size_t>(b);
  };

  auto write_marginal = [&](const Matrix& src, const std::string& prefix) {
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<std::size_t> count(bins, 0);
      for (std::size_t r = 0; r < src.rows; ++r) ++count[bin_of(src(r, c), c)];
      std::string csv = "bin_lo,bin_hi,count\n";
      const double w = (hi[c] - lo[c]) / static_cast<double>(bins);
      for (std::size_t b = 0; b < bins; ++b) {
        csv += io::format_g17(lo[c] + w * static_cast<double>(b)) + "," +
               io::format_g17(lo[c] + w * static_cast<double>(b + 1)) + "," +
               std::to_string(count[b]) + "\n";
      }
      io::write_file(dir + "/" + prefix + "marginal_" + std::to_string(c) + ".csv", csv);
    }
  };

  auto write_pairs = [&](const Matrix& src, const std::string& prefix) {
    for (std::size_t c0 = 0; c0 < d; ++c0)
      for (std::size_t c1 = c0 + 1; c1 < d; ++c1) {
        std::vector<std::size_t> count(bins * bins, 0);
        for (std::size_t r = 0; r < src.rows; ++r)
          ++count[bin_of(src(r, c0), c0) * bins + bin_of(src(r, c1), c1)];
        std::string csv = "bin_i,bin_j,count\n";
        for (std::size_t bi = 0; bi < bins; ++bi)
          for (std::size_t bj = 0; bj < bins; ++bj)
            csv += std::to_string(bi) + "," + std::to_string(bj) + "," +
                   std::to_string(count[bi * bins + bj]) + "\n";
        io::write_file(dir + "/" + prefix + "pair_" + std::to_string(c0) + "_" +
                           std::to_string(c1) + ".csv",
                       csv);
      }
  };

  write_marginal(samples, "");
  write_pairs(samples, "");
  if (reference) {
    write_marginal(*reference, "oracle_");
    write_pairs(*reference, "oracle_");
  }

  json meta;
  meta["bins"] = bins;
  meta["dims"] = d;
  json ranges = json::array();
  for (std::size_t c = 0; c < d; ++c) ranges.push_back({lo[c], hi[c]});
  meta["ranges"] = ranges;
  meta["model_count"] = samples.rows;
  meta["oracle_count"] = reference ? reference->rows : 0;
  io::write_file(dir + "/meta.json", meta.dump(2) + "\n");
}

}  // namespace

json run_evaluate(const std::string& run_dir, std::size_t grid_resolution) {
  json state = load_run_state(run_dir);
  state["grid_resolution"] = grid_resolution;
  const std::uint64_t run_seed = require_u64(state, "run_seed");
  const sims::TaskId task_id = sims::task_from_name(require_str(state, "task"));
  const sims::SimTask task = sims::make_task(task_id);

  const json echo = config_echo_from_state(state);
  const std::string hash = hash_of_echo(echo);
  save_run_state(run_dir, state);

  const auto obs_json = json::parse(io::read_file(run_dir + "/observation.json"));
  const Vec y0 = obs_json.at("y0").get<Vec>();
  const std::string tag = std::to_string(run_seed);
  const Matrix samples = io::csv_to_matrix(io::read_file(run_dir + "/samples_" + tag + ".csv"));
  if (samples.cols != task.theta_dim) fail("run_evaluate: sample dim mismatch");
  const auto cp = train::load_checkpoint(run_dir + "/checkpoint.bin", run_dir + "/checkpoint.json");

  json metrics;
  metrics["format_version"] = 1;
  metrics["seed"] = run_seed;
  metrics["config"] = echo;
  metrics["config_hash"] = hash;
  metrics["dataset_hash"] = state.value("dataset_hash", std::string());
  metrics["n_model_samples"] = samples.rows;
  metrics["observation"] = obs_json;

  const auto reference = reference_posterior_sample(task, y0, samples.rows,
                                                    mix_seed(run_seed, kOracleStream),
                                                    grid_resolution);
  if (reference) {
    json ref_meta;
    ref_meta["seed"] = run_seed;
    ref_meta["count"] = reference->rows;
    ref_meta["task"] = sims::task_name(task_id);
    ref_meta["source"] = "reference";
    write_samples_csv(run_dir + "/oracle_samples.csv", *reference, ref_meta,
                      run_dir + "/oracle_samples.meta.json");

    metrics["n_reference_samples"] = reference->rows;
    metrics["c2st"] = metrics::c2st(samples, *reference, mix_seed(run_seed, kMetricStream));
    metrics::BandwidthInfo bw;
    const auto mmd = metrics::mmd2(samples, *reference, &bw);
    metrics["mmd2"] = mmd.value;
    metrics["mmd_clamped"] = mmd.clamped;
    metrics["bandwidths"] = mmd.bandwidths;
    metrics["bandwidth_degenerate"] = bw.degenerate;
    metrics["ppc"] = nullptr;
  } else {
    const auto ppc = posterior_predictive_check(task, samples, y0, cp.y_scaler,
                                                mix_seed(run_seed, kPpcStream));
    json p;
    if (ppc.ratio)
      p["ratio"] = *ppc.ratio;
    else
      p["ratio"] = nullptr;
    p["posterior_median"] = ppc.posterior_median;
    p["prior_median"] = ppc.prior_median;
    p["failed_posterior_fraction"] = ppc.failed_posterior_fraction;
    p["failed_prior_fraction"] = ppc.failed_prior_fraction;
    metrics["ppc"] = p;
    metrics["c2st"] = nullptr;
    metrics["mmd2"] = nullptr;
  }

  io::write_file(run_dir + "/metrics_" + tag + ".json", metrics.dump(2) + "\n");
  emit_plot_data(run_dir, samples, reference ? &*reference : nullptr);
  return metrics;
}

namespace {
struct Collected {
  Vec values;
  json to_json() const {
    json j;
    if (values.empty()) return nullptr;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double std_dev =
        values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    j["mean"] = mean;
    j["std"] = std_dev;
    j["values"] = values;
    return j;
  }
};
}  // namespace

json run_report(const std::string& out_root) {
  std::vector<std::pair<std::uint64_t, std::string>> runs;
  if (!fs::exists(out_root)) fail("run_report: no such directory: " + out_root);
  for (const auto& entry : fs::directory_iterator(out_root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("run_seed", 0) != 0) continue;
    const std::string suffix = name.substr(8);
    if (suffix.empty() || suffix.find_first_not_of("0123456789") != std::string::npos) continue;
    runs.emplace_back(std::stoull(suffix), entry.path().string());
  }
  if (runs.empty()) fail("run_report: no run_seed* directories under " + out_root);
  std::sort(runs.begin(), runs.end());

  json per_run = json::array();
  Collected c2st_vals, mmd_vals, ppc_vals;
  std::string hash;
  json echo;
  std::vector<std::uint64_t> seeds;

  for (const auto& [seed, dir] : runs) {
    const std::string path = dir + "/metrics_" + std::to_string(seed) + ".json";
    if (!io::file_exists(path)) fail("run_report: missing " + path);
    const json m = json::parse(io::read_file(path));
    const std::string h = m.at("config_hash").get<std::string>();
    if (hash.empty()) {
      hash = h;
      echo = m.at("config");
    } else if (h != hash) {
      fail("run_report: refusing to aggregate runs with differing configurations (" + hash +
           " vs " + h + ")");
    }
    seeds.push_back(seed);

    json entry;
    entry["seed"] = seed;
    // Relative to out_root so the report is independent of where the tree
    // lives (and byte-identical across reruns in different locations).
    entry["metrics_file"] =
        fs::path(dir).filename().string() + "/metrics_" + std::to_string(seed) + ".json";
    if (!m.at("c2st").is_null()) {
      c2st_vals.values.push_back(m.at("c2st").get<double>());
      entry["c2st"] = m.at("c2st");
    }
    if (!m.at("mmd2").is_null()) {
      mmd_vals.values.push_back(m.at("mmd2").get<double>());
      entry["mmd2"] = m.at("mmd2");
    }
    if (!m.at("ppc").is_null() && !m.at("ppc").at("ratio").is_null()) {
      ppc_vals.values.push_back(m.at("ppc").at("ratio").get<double>());
      entry["ppc_ratio"] = m.at("ppc").at("ratio");
    }
    per_run.push_back(entry);
  }

  json report;
  report["format_version"] = 1;
  report["config"] = echo;
  report["config_hash"] = hash;
  report["n_runs"] = runs.size();
  report["seeds"] = seeds;
  json agg;
  agg["c2st"] = c2st_vals.to_json();
  agg["mmd2"] = mmd_vals.to_json();
  agg["ppc_ratio"] = ppc_vals.to_json();
  report["aggregate"] = agg;
  report["runs"] = per_run;

  io::write_file(out_root + "/report.json", report.dump(2) + "\n");
  return report;
}

json run_pipeline(const std::string& out_root, const PipelineConfig& cfg) {
  if (cfg.seeds.empty()) fail("run_pipeline: need at least one seed");
  io::ensure_dir(out_root);
  for (const std::uint64_t seed : cfg.seeds) {
    const std::string run_dir = out_root + "/run_seed" + std::to_string(seed);
    std::cout << "[pipeline] seed " << seed << ": simulate (" << sims::task_name(cfg.task)
              << ", budget " << cfg.budget << ")\n";
    run_simulate(run_dir, cfg.task, cfg.budget, seed);
    std::cout << "[pipeline] seed " << seed << ": train ("
              << models::model_kind_name(cfg.model) << ")\n";
    const train::TrainConfig tc =
        cfg.train_overrides ? *cfg.train_overrides : train::default_train_config(cfg.task, cfg.model);
    run_train(run_dir, cfg.model, tc);
    std::cout << "[pipeline] seed " << seed << ": sample (" << cfg.n_samples << " draws)\n";
    run_sample(run_dir, cfg.n_samples, cfg.obs_seed);
    std::cout << "[pipeline] seed " << seed << ": evaluate\n";
    run_evaluate(run_dir, cfg.grid_resolution);
  }
  return run_report(out_root);
}

std::string resolve_out_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("AMORTIS_OUT"); env && *env) return env;
  return "amortis_out";
}

namespace {

// Train-stage flags shared by `train` and `pipeline`; only flags the user
// actually passed override the per-task defaults.
struct TrainFlags {
  double lr = 0.0;
  std::size_t batch_size = 0, max_epochs = 0, patience = 0;
  double improvement_tol = 0.0, clip_norm = 0.0, val_fraction = 0.0, weight_decay = 0.0;
  CLI::Option *o_lr = nullptr, *o_batch = nullptr, *o_epochs = nullptr, *o_patience = nullptr,
              *o_tol = nullptr, *o_clip = nullptr, *o_val = nullptr, *o_wd = nullptr;

  void attach(CLI::App* cmd) {
    o_lr = cmd->add_option("--lr", lr, "Learning rate");
    o_batch = cmd->add_option("--batch-size", batch_size, "Minibatch size");
    o_epochs = cmd->add_option("--max-epochs", max_epochs, "Maximum training epochs");
    o_patience = cmd->add_option("--patience", patience, "Early-stopping patience (epochs)");
    o_tol = cmd->add_option("--improvement-tol", improvement_tol,
                            "Absolute validation improvement threshold");
    o_clip = cmd->add_option("--clip-norm", clip_norm, "Global gradient-norm clip");
    o_val = cmd->add_option("--val-fraction", val_fraction, "Validation split fraction");
    o_wd = cmd->add_option("--weight-decay", weight_decay, "AdamW weight decay");
  }

  train::TrainConfig apply(train::TrainConfig cfg) const {
    if (o_lr->count()) cfg.lr = lr;
    if (o_batch->count()) cfg.batch_size = batch_size;
    if (o_epochs->count()) cfg.max_epochs = max_epochs;
    if (o_patience->count()) cfg.patience = patience;
    if (o_tol->count()) cfg.improvement_tol = improvement_tol;
    if (o_clip->count()) cfg.clip_norm = clip_norm;
    if (o_val->count()) cfg.val_fraction = val_fraction;
    if (o_wd->count()) cfg.weight_decay = weight_decay;
    return cfg;
  }
};

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Amortized posterior estimation experiments"};
  app.require_subcommand(1);

  std::string run_dir, out_flag, task_name_arg, model_name_arg;
  std::size_t budget = 10000, n_samples = 10000, grid_resolution = 512;
  std::uint64_t seed = 1, obs_seed = 101;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  auto* c_sim = app.add_subcommand("simulate", "Generate a training dataset");
  c_sim->set_config("--config");
  c_sim->add_option("--run-dir", run_dir, "Run directory")->required();
  c_sim->add_option("--task", task_name_arg, "Benchmark task")->required();
  c_sim->add_option("--budget", budget, "Simulation budget (dataset size)");
  c_sim->add_option("--seed", seed, "Run seed");

  auto* c_train = app.add_subcommand("train", "Train a model on a run's dataset");
  c_train->set_config("--config");
  c_train->add_option("--run-dir", run_dir, "Run directory")->required();
  c_train->add_option("--model", model_name_arg, "cpvae or upvae")->required();
  TrainFlags train_flags;
  train_flags.attach(c_train);

  auto* c_sample = app.add_subcommand("sample", "Draw posterior samples for the observation");
  c_sample->set_config("--config");
  c_sample->add_option("--run-dir", run_dir, "Run directory")->required();
  c_sample->add_option("--samples", n_samples, "Number of posterior draws");
  c_sample->add_option("--obs-seed", obs_seed, "Observation seed");

  auto* c_eval = app.add_subcommand("evaluate", "Score samples against the reference");
  c_eval->set_config("--config");
  c_eval->add_option("--run-dir", run_dir, "Run directory")->required();
  c_eval->add_option("--grid-resolution", grid_resolution, "Grid cells per axis");

  auto* c_report = app.add_subcommand("report", "Aggregate run metrics under an output root");
  c_report->set_config("--config");
  c_report->add_option("--out", out_flag, "Output root (default: $AMORTIS_OUT or ./amortis_out)");

  auto* c_pipe = app.add_subcommand("pipeline", "simulate + train + sample + evaluate + report");
  c_pipe->set_config("--config");
  c_pipe->add_option("--out", out_flag, "Output root (default: $AMORTIS_OUT or ./amortis_out)");
  c_pipe->add_option("--task", task_name_arg, "Benchmark task")->required();
  c_pipe->add_option("--model", model_name_arg, "cpvae or upvae")->required();
  c_pipe->add_option("--budget", budget, "Simulation budget (dataset size)");
  c_pipe->add_option("--samples", n_samples, "Number of posterior draws");
  c_pipe->add_option("--obs-seed", obs_seed, "Observation seed");
  c_pipe->add_option("--seeds", seeds, "Run seeds")->delimiter(',');
  c_pipe->add_option("--grid-resolution", grid_resolution, "Grid cells per axis");
  TrainFlags pipe_train_flags;
  pipe_train_flags.attach(c_pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (c_sim->parsed()) {
      run_simulate(run_dir, sims::task_from_name(task_name_arg), budget, seed);
    } else if (c_train->parsed()) {
      const json state = load_run_state(run_dir);
      const sims::TaskId task = sims::task_from_name(require_str(state, "task"));
      const models::ModelKind kind = models::model_kind_from_name(model_name_arg);
      run_train(run_dir, kind, train_flags.apply(train::default_train_config(task, kind)));
    } else if (c_sample->parsed()) {
      run_sample(run_dir, n_samples, obs_seed);
    } else if (c_eval->parsed()) {
      run_evaluate(run_dir, grid_resolution);
    } else if (c_report->parsed()) {
      run_report(resolve_out_root(out_flag));
    } else if (c_pipe->parsed()) {
      PipelineConfig cfg;
      cfg.task = sims::task_from_name(task_name_arg);
      cfg.model = models::model_kind_from_name(model_name_arg);
      cfg.budget = budget;
      cfg.n_samples = n_samples;
      cfg.obs_seed = obs_seed;
      cfg.seeds = seeds;
      cfg.grid_resolution = grid_resolution;
      cfg.train_overrides =
          pipe_train_flags.apply(train::default_train_config(cfg.task, cfg.model));
      run_pipeline(resolve_out_root(out_flag), cfg);
    }
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    err["command"] = command;
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace amortis::harness
