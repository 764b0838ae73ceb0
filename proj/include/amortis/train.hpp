#pragma once
// Seeded training driver: deterministic split, scaling fit on the train
// split, per-epoch shuffles, AdamW with a joint global-norm clip across all
// sub-networks, early stopping on validation loss, and restoration of the
// best-validation weights. Identical (dataset, config) in, identical trained
// parameters out.

#include <cstdint>
#include <limits>
#include <string>

#include "amortis/models.hpp"
#include "amortis/sims.hpp"

namespace amortis::train {

struct TrainConfig {
  double lr = 5e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 1000;
  std::size_t patience = 20;
  double improvement_tol = 1e-6;  // absolute: val must beat best - tol
  double clip_norm = 3.0;
  double val_fraction = 0.1;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
};

// Benchmark defaults; a couple of tasks train with their own batch size / lr.
TrainConfig default_train_config(sims::TaskId task, models::ModelKind kind);

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, mean over training rows
  std::vector<double> val_loss;    // per epoch
  std::size_t best_epoch = 0;      // 1-based epoch with the best val loss
  double best_val = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  std::uint64_t clipped_steps = 0;
  std::uint64_t total_steps = 0;
  double wall_seconds = 0.0;
  double cpu_seconds = 0.0;
};

struct SplitIndices {
  std::vector<std::size_t> train, val;
};

// Seeded permutation split; train size = ceil(n * (1 - val_fraction)).
SplitIndices split_dataset(std::size_t n, double val_fraction, std::uint64_t seed);

// val < best - tol counts as improvement; stop once `patience` epochs pass
// without one. Epochs are 1-based.
struct EarlyStopper {
  std::size_t patience = 20;
  double tol = 1e-6;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;

  bool observe(std::size_t epoch, double val) {
    if (val < best - tol) {
      best = val;
      best_epoch = epoch;
      return true;
    }
    return false;
  }
  bool should_stop(std::size_t epoch) const {
    return best_epoch > 0 && epoch - best_epoch >= patience;
  }
};

struct TrainedModel {
  models::AnyModel model;
  sims::StandardScaler theta_scaler;  // fit on the train split
  sims::StandardScaler y_scaler;
  TrainReport report;
};

// Builds the benchmark architecture for the dataset's task and trains it.
TrainedModel train_model(models::ModelKind kind, const sims::Dataset& ds,
                         const TrainConfig& cfg);

// Train a caller-built model in place (tests use tiny architectures).
TrainReport train_cpvae(models::CpVae& m, const sims::Dataset& ds, const TrainConfig& cfg,
                        sims::StandardScaler* theta_scaler = nullptr,
                        sims::StandardScaler* y_scaler = nullptr);
TrainReport train_upvae(models::UpVae& m, const sims::Dataset& ds, const TrainConfig& cfg,
                        sims::StandardScaler* theta_scaler = nullptr,
                        sims::StandardScaler* y_scaler = nullptr);

// Checkpoint = binary model blob + JSON sidecar (task, dims, scalers).
struct Checkpoint {
  models::AnyModel model;
  sims::TaskId task;
  sims::StandardScaler theta_scaler, y_scaler;
};

void save_checkpoint(const TrainedModel& tm, sims::TaskId task, const std::string& bin_path,
                     const std::string& json_path);
Checkpoint load_checkpoint(const std::string& bin_path, const std::string& json_path);

}  // namespace amortis::train
