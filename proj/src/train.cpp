#include "amortis/train.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "amortis/io.hpp"
#include "amortis/rng.hpp"

namespace amortis::train {

namespace {

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), src.cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < src.cols; ++c) out(r, c) = src(rows[r], c);
  return out;
}

void check_config(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) fail("train: lr must be positive");
  if (cfg.batch_size == 0) fail("train: batch_size must be positive");
  if (cfg.max_epochs == 0) fail("train: max_epochs must be positive");
  if (cfg.patience == 0) fail("train: patience must be positive");
  if (!(cfg.val_fraction > 0.0) || !(cfg.val_fraction < 1.0))
    fail("train: val_fraction must lie in (0, 1)");
  if (!(cfg.clip_norm > 0.0)) fail("train: clip_norm must be positive");
}

// The whole loop is shared between the two model kinds: `loss_fn` evaluates
// the batch loss (optionally with gradients) and `nets`/`gsets` expose the
// sub-networks and their gradient buffers in a fixed order.
template <class LossFn, class GradHolder>
TrainReport run_training(LossFn&& loss_fn, std::array<nn::Network*, 3> nets,
                         GradHolder&& grad_refs, const sims::Dataset& ds,
                         const TrainConfig& cfg, sims::StandardScaler* theta_out,
                         sims::StandardScaler* y_out,
                         const std::function<void()>& snapshot,
                         const std::function<void()>& restore) {
  check_config(cfg);
  const auto wall_start = std::chrono::steady_clock::now();
  const std::clock_t cpu_start = std::clock();

  const SplitIndices split = split_dataset(ds.thetas.rows, cfg.val_fraction, mix_seed(cfg.seed, 11));

  const sims::StandardScaler theta_scaler = sims::fit_scaler(gather_rows(ds.thetas, split.train));
  const sims::StandardScaler y_scaler = sims::fit_scaler(gather_rows(ds.ys, split.train));
  if (theta_out) *theta_out = theta_scaler;
  if (y_out) *y_out = y_scaler;
  const Matrix thetas = sims::scale(theta_scaler, ds.thetas);
  const Matrix ys = sims::scale(y_scaler, ds.ys);

  const Matrix val_theta = gather_rows(thetas, split.val);
  const Matrix val_y = gather_rows(ys, split.val);
  const std::size_t latent = grad_refs.latent_dim;

  std::vector<nn::OptimizerState> opt;
  opt.reserve(3);
  for (nn::Network* net : nets)
    opt.push_back(nn::adamw_init(*net, cfg.lr, cfg.weight_decay));

  const Rng shuffle_base(mix_seed(cfg.seed, 21));
  const Rng noise_base(mix_seed(cfg.seed, 22));
  const Rng val_noise_base(mix_seed(cfg.seed, 23));

  TrainReport report;
  EarlyStopper stopper{cfg.patience, cfg.improvement_tol};
  std::vector<std::size_t> perm = split.train;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = shuffle_base.derive(epoch);
    shuffle_rng.shuffle(perm);
    Rng noise_rng = noise_base.derive(epoch);

    double loss_weighted = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(perm.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(perm.data() + start, stop - start);
      const Matrix bt = gather_rows(thetas, rows);
      const Matrix by = gather_rows(ys, rows);
      Matrix noise(rows.size(), latent);
      noise_rng.fill_normal(noise.data);

      models::LossStats stats;
      try {
        stats = loss_fn(bt, by, noise, true);
      } catch (const std::exception& e) {
        fail("train: epoch " + std::to_string(epoch) + ", batch at row " +
             std::to_string(start) + ": " + e.what());
      }
      loss_weighted += stats.total * static_cast<double>(rows.size());

      auto gsets = grad_refs.sets();
      const auto clip = nn::clip_global_norm(std::span<nn::GradientSet*>(gsets), cfg.clip_norm);
      if (clip.clipped) ++report.clipped_steps;
      for (std::size_t k = 0; k < nets.size(); ++k)
        nn::adamw_step(*nets[k], *gsets[k], opt[k]);
      ++report.total_steps;
    }
    report.train_loss.push_back(loss_weighted / static_cast<double>(perm.size()));

    Rng val_rng = val_noise_base.derive(epoch);
    Matrix val_noise(val_theta.rows, latent);
    val_rng.fill_normal(val_noise.data);
    const models::LossStats val_stats = loss_fn(val_theta, val_y, val_noise, false);
    report.val_loss.push_back(val_stats.total);

    if (stopper.observe(epoch, val_stats.total)) snapshot();
    if (stopper.should_stop(epoch)) {
      report.stopped_early = true;
      break;
    }
  }

  restore();
  report.best_epoch = stopper.best_epoch;
  report.best_val = stopper.best;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  report.cpu_seconds = static_cast<double>(std::clock() - cpu_start) / CLOCKS_PER_SEC;
  return report;
}

}  // namespace

TrainConfig default_train_config(sims::TaskId task, models::ModelKind kind) {
  TrainConfig cfg;
  if (task == sims::TaskId::LotkaVolterra) {
    cfg.batch_size = 128;
    cfg.lr = 1e-4;
  } else if (task == sims::TaskId::TwoMoons && kind == models::ModelKind::UpVae) {
    cfg.batch_size = 50;
  }
  return cfg;
}

SplitIndices split_dataset(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (n < 2) fail("split_dataset: need n >= 2");
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    fail("split_dataset: val_fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto train_n = static_cast<std::size_t>(
      std::ceil(static_cast<double>(n) * (1.0 - val_fraction)));
  if (train_n == 0 || train_n == n) fail("split_dataset: degenerate split");
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_n));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(train_n), idx.end());
  return s;
}

namespace {
struct CpGradRefs {
  models::CpVaeGrads g;
  std::size_t latent_dim;
  std::array<nn::GradientSet*, 3> sets() { return {&g.encoder, &g.prior_net, &g.decoder}; }
};
struct UpGradRefs {
  models::UpVaeGrads g;
  std::size_t latent_dim;
  std::array<nn::GradientSet*, 3> sets() {
    return {&g.encoder, &g.theta_decoder, &g.data_decoder};
  }
};
}  // namespace

TrainReport train_cpvae(models::CpVae& m, const sims::Dataset& ds, const TrainConfig& cfg,
                        sims::StandardScaler* theta_scaler, sims::StandardScaler* y_scaler) {
  CpGradRefs refs{{}, m.latent_dim};
  models::CpVae best = m;
  auto loss_fn = [&](const Matrix& t, const Matrix& y, const Matrix& noise, bool want_grads) {
    return models::cpvae_loss(m, t, y, noise, want_grads ? &refs.g : nullptr);
  };
  return run_training(loss_fn, {&m.encoder, &m.prior_net, &m.decoder}, refs, ds, cfg,
                      theta_scaler, y_scaler, [&] { best = m; }, [&] { m = best; });
}

TrainReport train_upvae(models::UpVae& m, const sims::Dataset& ds, const TrainConfig& cfg,
                        sims::StandardScaler* theta_scaler, sims::StandardScaler* y_scaler) {
  UpGradRefs refs{{}, m.latent_dim};
  models::UpVae best = m;
  auto loss_fn = [&](const Matrix& t, const Matrix& y, const Matrix& noise, bool want_grads) {
    return models::upvae_loss(m, t, y, noise, want_grads ? &refs.g : nullptr);
  };
  return run_training(loss_fn, {&m.encoder, &m.theta_decoder, &m.data_decoder}, refs, ds, cfg,
                      theta_scaler, y_scaler, [&] { best = m; }, [&] { m = best; });
}

TrainedModel train_model(models::ModelKind kind, const sims::Dataset& ds,
                         const TrainConfig& cfg) {
  TrainedModel out;
  const std::uint64_t init_seed = mix_seed(cfg.seed, 7);
  if (kind == models::ModelKind::CpVae) {
    models::CpVae m = models::build_cpvae(models::default_cpvae_arch(ds.task), init_seed);
    out.report = train_cpvae(m, ds, cfg, &out.theta_scaler, &out.y_scaler);
    out.model = std::move(m);
  } else {
    models::UpVae m = models::build_upvae(models::default_upvae_arch(ds.task), init_seed);
    out.report = train_upvae(m, ds, cfg, &out.theta_scaler, &out.y_scaler);
    out.model = std::move(m);
  }
  return out;
}

namespace {
nlohmann::json scaler_to_json(const sims::StandardScaler& s) {
  nlohmann::json j;
  j["mean"] = s.mean;
  j["std"] = s.std_dev;
  j["flagged"] = s.flagged;
  return j;
}

sims::StandardScaler scaler_from_json(const nlohmann::json& j) {
  sims::StandardScaler s;
  s.mean = j.at("mean").get<Vec>();
  s.std_dev = j.at("std").get<Vec>();
  s.flagged = j.at("flagged").get<std::vector<std::uint8_t>>();
  if (s.mean.size() != s.std_dev.size() || s.mean.size() != s.flagged.size())
    fail("checkpoint: corrupt scaler");
  return s;
}
}  // namespace

void save_checkpoint(const TrainedModel& tm, sims::TaskId task, const std::string& bin_path,
                     const std::string& json_path) {
  std::ofstream os(bin_path, std::ios::binary | std::ios::trunc);
  if (!os) fail("save_checkpoint: cannot open " + bin_path);
  models::save_model(tm.model, os);
  os.close();

  nlohmann::json j;
  j["format_version"] = 1;
  j["task"] = sims::task_name(task);
  j["model"] = models::model_kind_name(models::model_kind(tm.model));
  j["theta_scaler"] = scaler_to_json(tm.theta_scaler);
  j["y_scaler"] = scaler_to_json(tm.y_scaler);
  io::write_file(json_path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& bin_path, const std::string& json_path) {
  std::ifstream is(bin_path, std::ios::binary);
  if (!is) fail("load_checkpoint: cannot open " + bin_path);
  Checkpoint cp;
  cp.model = models::load_model(is);

  const auto j = nlohmann::json::parse(io::read_file(json_path));
  if (j.at("format_version").get<int>() != 1) fail("load_checkpoint: unsupported format");
  cp.task = sims::task_from_name(j.at("task").get<std::string>());
  if (j.at("model").get<std::string>() !=
      models::model_kind_name(models::model_kind(cp.model)))
    fail("load_checkpoint: sidecar model kind disagrees with blob");
  cp.theta_scaler = scaler_from_json(j.at("theta_scaler"));
  cp.y_scaler = scaler_from_json(j.at("y_scaler"));
  return cp;
}

}  // namespace amortis::train
