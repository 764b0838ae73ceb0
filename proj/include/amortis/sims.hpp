#pragma once
// Benchmark simulators: parameter priors, forward models, dataset generation,
// and standard scaling. Every stochastic step draws from an explicit Rng so a
// (task, n, seed) triple always yields the same dataset; per-row streams are
// derived from the seed, independent of evaluation order.

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "amortis/common.hpp"
#include "amortis/rng.hpp"

namespace amortis::sims {

enum class TaskId : std::uint32_t {
  TwoMoons = 0,
  GaussianLinear = 1,
  GaussianLinearUniform = 2,
  GaussianMixture = 3,
  BernoulliGlm = 4,
  BernoulliGlmRaw = 5,
  Sir = 6,
  LotkaVolterra = 7,
};

const char* task_name(TaskId id);
TaskId task_from_name(const std::string& name);
std::vector<TaskId> all_tasks();

// Raised when a forward model cannot produce a finite observation; carries
// the offending parameter vector.
struct SimError : std::runtime_error {
  Vec theta;
  SimError(const std::string& msg, Vec t) : std::runtime_error(msg), theta(std::move(t)) {}
};

// Shared model constants (also used by the reference posteriors).
inline constexpr double kTwoMoonsRadiusMean = 0.1;
inline constexpr double kTwoMoonsRadiusStd = 0.01;
inline constexpr double kTwoMoonsOffset = 0.25;
inline constexpr double kGaussPriorVar = 0.1;   // GaussianLinear prior variance
inline constexpr double kGaussLikVar = 0.1;     // Gaussian(Linear*) likelihood variance
inline constexpr double kGmmStd1 = 1.0;
inline constexpr double kGmmStd2 = 0.1;
inline constexpr std::size_t kGlmBins = 100;    // Bernoulli GLM time bins
inline constexpr std::size_t kGlmWeights = 9;   // Bernoulli GLM filter length
inline constexpr double kSirPopulation = 1e6;
inline constexpr double kSirHorizon = 160.0;
inline constexpr double kSirStep = 0.1;
inline constexpr std::uint64_t kSirObsTrials = 1000;
inline constexpr double kLvHorizon = 20.0;
inline constexpr double kLvStep = 0.01;
inline constexpr double kLvObsNoise = 0.1;      // log-scale observation noise
inline constexpr std::size_t kOdeObsPoints = 10;

// A task bundle: dimensions plus any frozen context (the Bernoulli GLM's
// random design matrix and smoothness prior operator).
struct SimTask {
  TaskId id;
  std::size_t theta_dim = 0;
  std::size_t y_dim = 0;
  Matrix glm_design;      // kGlmBins x kGlmWeights, standard-normal, frozen
  Matrix glm_smoothness;  // kGlmWeights x kGlmWeights banded operator F
};

SimTask make_task(TaskId id);

// The banded operator F with F[i][i] = 1 + sqrt(i/9) (0-based), F[i][i-1] = -2,
// F[i][i-2] = 1; the filter prior is f ~ N(0, (F^T F)^-1).
Matrix glm_smoothness_matrix();

Vec prior_sample(const SimTask& task, Rng& rng);
Vec simulate(const SimTask& task, std::span<const double> theta, Rng& rng);

// Dense integrator output for the ODE tasks, one row per RK4 step including
// t = 0 (SIR columns S, I, R; Lotka-Volterra columns prey, predator).
// Exposed so integration invariants such as population conservation can be
// checked directly.
Matrix sir_trajectory(std::span<const double> theta);
Matrix lv_trajectory(std::span<const double> theta);

// Column-wise standardization state. Columns whose spread vanishes keep
// scale 1 and are flagged instead of dividing by ~0.
struct StandardScaler {
  Vec mean;
  Vec std_dev;
  std::vector<std::uint8_t> flagged;
};

StandardScaler fit_scaler(const Matrix& data);
Matrix scale(const StandardScaler& s, const Matrix& data);
Matrix unscale(const StandardScaler& s, const Matrix& data);
Vec scale_row(const StandardScaler& s, std::span<const double> row);
Vec unscale_row(const StandardScaler& s, std::span<const double> row);

struct Dataset {
  TaskId task;
  std::uint64_t seed = 0;
  Matrix thetas;  // n x theta_dim, native units
  Matrix ys;      // n x y_dim, native units
  StandardScaler theta_scaler;  // fit over all rows
  StandardScaler y_scaler;
};

// n >= 2 (scaling needs spread). Row i draws from a stream keyed (seed, i).
Dataset generate_dataset(const SimTask& task, std::size_t n, std::uint64_t seed);

// Directory layout: meta.json + headerless thetas.csv / ys.csv with
// full-precision (%.17g) values. Loading verifies dims and the content hash.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);
std::string dataset_hash(const Dataset& ds);

}  // namespace amortis::sims
