#include "amortis/sims.hpp"

#include <array>
#include <cmath>

#include <json.hpp>

#include "amortis/io.hpp"

namespace amortis::sims {

namespace {
constexpr double kPi = 3.1415926535897932384626433832795;
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
// The Bernoulli GLM design matrix is part of the task definition, not of any
// dataset, so it is frozen from its own constant seed.
constexpr std::uint64_t kGlmDesignSeed = 0x676c6d2d64736e75ull;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::uint64_t binomial_draw(Rng& rng, std::uint64_t trials, double p) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  std::uint64_t count = 0;
  for (std::uint64_t t = 0; t < trials; ++t)
    if (rng.uniform01() < p) ++count;
  return count;
}

// Classic RK4 over an autonomous system; records the state at the requested
// step indices. Errors out (with theta attached) if the state leaves the
// finite range, so callers never see silent blow-ups.
template <std::size_t Dim, class Deriv>
std::vector<std::array<double, Dim>> integrate_rk4(std::array<double, Dim> state, double dt,
                                                   std::size_t steps,
                                                   std::span<const std::size_t> record_at,
                                                   Deriv deriv,
                                                   std::span<const double> theta) {
  std::vector<std::array<double, Dim>> recorded;
  recorded.reserve(record_at.size());
  std::size_t next_record = 0;
  auto maybe_record = [&](std::size_t step) {
    while (next_record < record_at.size() && record_at[next_record] == step) {
      recorded.push_back(state);
      ++next_record;
    }
  };
  maybe_record(0);
  for (std::size_t s = 1; s <= steps; ++s) {
    const auto k1 = deriv(state);
    std::array<double, Dim> tmp;
    for (std::size_t i = 0; i < Dim; ++i) tmp[i] = state[i] + 0.5 * dt * k1[i];
    const auto k2 = deriv(tmp);
    for (std::size_t i = 0; i < Dim; ++i) tmp[i] = state[i] + 0.5 * dt * k2[i];
    const auto k3 = deriv(tmp);
    for (std::size_t i = 0; i < Dim; ++i) tmp[i] = state[i] + dt * k3[i];
    const auto k4 = deriv(tmp);
    for (std::size_t i = 0; i < Dim; ++i)
      state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    for (double x : state)
      if (!std::isfinite(x) || std::abs(x) > 1e12)
        throw SimError("ode integration diverged", Vec(theta.begin(), theta.end()));
    maybe_record(s);
  }
  if (next_record != record_at.size())
    throw SimError("ode recording schedule out of range", Vec(theta.begin(), theta.end()));
  return recorded;
}

// Observation grid for the ODE tasks: the horizon split into kOdeObsPoints
// equal intervals, recording at the right edge of each (t = 0 is excluded;
// the initial state is known).
auto sir_deriv(double beta, double gamma, double n_pop) {
  return [beta, gamma, n_pop](const std::array<double, 3>& s) {
    const double scale = s[1] / n_pop;
    return std::array<double, 3>{-beta * s[0] * scale, (beta * s[0] - gamma * s[1]) * scale,
                                 gamma * s[1] * scale};
  };
}

auto lv_deriv(double alpha, double beta, double gamma, double delta) {
  return [alpha, beta, gamma, delta](const std::array<double, 2>& s) {
    return std::array<double, 2>{alpha * s[0] - beta * s[0] * s[1],
                                 -gamma * s[1] + delta * s[0] * s[1]};
  };
}

std::vector<std::size_t> ode_record_steps(std::size_t total_steps) {
  std::vector<std::size_t> idx(kOdeObsPoints);
  for (std::size_t k = 0; k < kOdeObsPoints; ++k)
    idx[k] = (k + 1) * total_steps / kOdeObsPoints;
  return idx;
}
}  // namespace

const char* task_name(TaskId id) {
  switch (id) {
    case TaskId::TwoMoons: return "two_moons";
    case TaskId::GaussianLinear: return "gaussian_linear";
    case TaskId::GaussianLinearUniform: return "gaussian_linear_uniform";
    case TaskId::GaussianMixture: return "gaussian_mixture";
    case TaskId::BernoulliGlm: return "bernoulli_glm";
    case TaskId::BernoulliGlmRaw: return "bernoulli_glm_raw";
    case TaskId::Sir: return "sir";
    case TaskId::LotkaVolterra: return "lotka_volterra";
  }
  fail("unknown task id");
}

TaskId task_from_name(const std::string& name) {
  for (TaskId id : all_tasks())
    if (name == task_name(id)) return id;
  fail("unknown task name: " + name);
}

std::vector<TaskId> all_tasks() {
  return {TaskId::TwoMoons,     TaskId::GaussianLinear, TaskId::GaussianLinearUniform,
          TaskId::GaussianMixture, TaskId::BernoulliGlm, TaskId::BernoulliGlmRaw,
          TaskId::Sir,          TaskId::LotkaVolterra};
}

Matrix glm_smoothness_matrix() {
  Matrix f(kGlmWeights, kGlmWeights, 0.0);
  for (std::size_t i = 0; i < kGlmWeights; ++i) {
    if (i >= 2) f(i, i - 2) = 1.0;
    if (i >= 1) f(i, i - 1) = -2.0;
    f(i, i) = 1.0 + std::sqrt(static_cast<double>(i) / 9.0);
  }
  return f;
}

SimTask make_task(TaskId id) {
  SimTask task;
  task.id = id;
  switch (id) {
    case TaskId::TwoMoons: task.theta_dim = 2; task.y_dim = 2; break;
    case TaskId::GaussianLinear: task.theta_dim = 10; task.y_dim = 10; break;
    case TaskId::GaussianLinearUniform: task.theta_dim = 10; task.y_dim = 10; break;
    case TaskId::GaussianMixture: task.theta_dim = 2; task.y_dim = 2; break;
    case TaskId::BernoulliGlm: task.theta_dim = 10; task.y_dim = 10; break;
    case TaskId::BernoulliGlmRaw: task.theta_dim = 10; task.y_dim = kGlmBins; break;
    case TaskId::Sir: task.theta_dim = 2; task.y_dim = kOdeObsPoints; break;
    case TaskId::LotkaVolterra: task.theta_dim = 4; task.y_dim = 2 * kOdeObsPoints; break;
  }
  if (id == TaskId::BernoulliGlm || id == TaskId::BernoulliGlmRaw) {
    Rng rng(kGlmDesignSeed);
    task.glm_design = Matrix(kGlmBins, kGlmWeights);
    for (double& v : task.glm_design.data) v = rng.normal();
    task.glm_smoothness = glm_smoothness_matrix();
  }
  return task;
}

namespace {
// Forward substitution for the banded lower-triangular smoothness operator:
// returns f with F f = e, so f ~ N(0, (F^T F)^-1) when e is standard normal.
Vec solve_smoothness(const Matrix& f_op, const Vec& e) {
  Vec f(e.size(), 0.0);
  for (std::size_t i = 0; i < e.size(); ++i) {
    double acc = e[i];
    for (std::size_t j = 0; j < i; ++j) acc -= f_op(i, j) * f[j];
    f[i] = acc / f_op(i, i);
  }
  return f;
}
}  // namespace

Vec prior_sample(const SimTask& task, Rng& rng) {
  Vec theta(task.theta_dim);
  switch (task.id) {
    case TaskId::TwoMoons:
      for (double& t : theta) t = rng.uniform(-1.0, 1.0);
      break;
    case TaskId::GaussianLinear:
      for (double& t : theta) t = rng.normal(0.0, std::sqrt(kGaussPriorVar));
      break;
    case TaskId::GaussianLinearUniform:
      for (double& t : theta) t = rng.uniform(-1.0, 1.0);
      break;
    case TaskId::GaussianMixture:
      for (double& t : theta) t = rng.uniform(-10.0, 10.0);
      break;
    case TaskId::BernoulliGlm:
    case TaskId::BernoulliGlmRaw: {
      theta[0] = rng.normal(0.0, std::sqrt(2.0));
      Vec e(kGlmWeights);
      for (double& x : e) x = rng.normal();
      const Vec f = solve_smoothness(task.glm_smoothness, e);
      for (std::size_t i = 0; i < kGlmWeights; ++i) theta[1 + i] = f[i];
      break;
    }
    case TaskId::Sir:
      theta[0] = std::exp(rng.normal(std::log(0.4), 0.5));
      theta[1] = std::exp(rng.normal(std::log(0.125), 0.2));
      break;
    case TaskId::LotkaVolterra:
      theta[0] = std::exp(rng.normal(-0.125, 0.5));
      theta[1] = std::exp(rng.normal(-3.0, 0.5));
      theta[2] = std::exp(rng.normal(-0.125, 0.5));
      theta[3] = std::exp(rng.normal(-3.0, 0.5));
      break;
  }
  return theta;
}

Vec simulate(const SimTask& task, std::span<const double> theta, Rng& rng) {
  if (theta.size() != task.theta_dim) fail("simulate: theta dimension mismatch");
  for (double t : theta)
    if (!std::isfinite(t)) throw SimError("simulate: non-finite theta", Vec(theta.begin(), theta.end()));
  Vec y(task.y_dim);

  switch (task.id) {
    case TaskId::TwoMoons: {
      const double a = rng.uniform(-kPi / 2.0, kPi / 2.0);
      const double r = rng.normal(kTwoMoonsRadiusMean, kTwoMoonsRadiusStd);
      y[0] = r * std::cos(a) + kTwoMoonsOffset - std::abs(theta[0] + theta[1]) * kInvSqrt2;
      y[1] = r * std::sin(a) + (theta[1] - theta[0]) * kInvSqrt2;
      break;
    }
    case TaskId::GaussianLinear:
    case TaskId::GaussianLinearUniform: {
      const double sd = std::sqrt(kGaussLikVar);
      for (std::size_t i = 0; i < task.y_dim; ++i) y[i] = theta[i] + sd * rng.normal();
      break;
    }
    case TaskId::GaussianMixture: {
      const double sd = rng.uniform01() < 0.5 ? kGmmStd1 : kGmmStd2;
      for (std::size_t i = 0; i < task.y_dim; ++i) y[i] = theta[i] + sd * rng.normal();
      break;
    }
    case TaskId::BernoulliGlm:
    case TaskId::BernoulliGlmRaw: {
      const double beta = theta[0];
      std::vector<double> z(kGlmBins);
      for (std::size_t i = 0; i < kGlmBins; ++i) {
        double psi = beta;
        for (std::size_t j = 0; j < kGlmWeights; ++j)
          psi += task.glm_design(i, j) * theta[1 + j];
        z[i] = rng.uniform01() < sigmoid(psi) ? 1.0 : 0.0;
      }
      if (task.id == TaskId::BernoulliGlmRaw) {
        for (std::size_t i = 0; i < kGlmBins; ++i) y[i] = z[i];
      } else {
        double total = 0.0;
        for (double v : z) total += v;
        y[0] = total;
        for (std::size_t j = 0; j < kGlmWeights; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < kGlmBins; ++i) acc += z[i] * task.glm_design(i, j);
          y[1 + j] = total > 0.0 ? acc / total : 0.0;
        }
      }
      break;
    }
    case TaskId::Sir: {
      const double beta = theta[0], gamma = theta[1];
      const double n_pop = kSirPopulation;
      const auto steps = static_cast<std::size_t>(std::llround(kSirHorizon / kSirStep));
      const auto record = ode_record_steps(steps);
      const auto states = integrate_rk4<3>({n_pop - 1.0, 1.0, 0.0}, kSirStep, steps, record,
                                           sir_deriv(beta, gamma, n_pop), theta);
      for (std::size_t k = 0; k < kOdeObsPoints; ++k) {
        const double p = std::min(1.0, std::max(0.0, states[k][1] / n_pop));
        y[k] = static_cast<double>(binomial_draw(rng, kSirObsTrials, p));
      }
      break;
    }
    case TaskId::LotkaVolterra: {
      const double alpha = theta[0], beta = theta[1], gamma = theta[2], delta = theta[3];
      const auto steps = static_cast<std::size_t>(std::llround(kLvHorizon / kLvStep));
      const auto record = ode_record_steps(steps);
      const auto states = integrate_rk4<2>({30.0, 1.0}, kLvStep, steps, record,
                                           lv_deriv(alpha, beta, gamma, delta), theta);
      for (std::size_t k = 0; k < kOdeObsPoints; ++k)
        y[k] = states[k][0] * std::exp(kLvObsNoise * rng.normal());
      for (std::size_t k = 0; k < kOdeObsPoints; ++k)
        y[kOdeObsPoints + k] = states[k][1] * std::exp(kLvObsNoise * rng.normal());
      break;
    }
  }

  if (!all_finite(std::span<const double>(y)))
    throw SimError("simulate: non-finite observation", Vec(theta.begin(), theta.end()));
  return y;
}

namespace {
std::vector<std::size_t> every_step(std::size_t total_steps) {
  std::vector<std::size_t> idx(total_steps + 1);
  for (std::size_t s = 0; s <= total_steps; ++s) idx[s] = s;
  return idx;
}

template <std::size_t Dim>
Matrix states_to_matrix(const std::vector<std::array<double, Dim>>& states) {
  Matrix m(states.size(), Dim);
  for (std::size_t r = 0; r < states.size(); ++r)
    for (std::size_t c = 0; c < Dim; ++c) m(r, c) = states[r][c];
  return m;
}
}  // namespace

Matrix sir_trajectory(std::span<const double> theta) {
  if (theta.size() != 2) fail("sir_trajectory: theta must be (beta, gamma)");
  const auto steps = static_cast<std::size_t>(std::llround(kSirHorizon / kSirStep));
  const auto states =
      integrate_rk4<3>({kSirPopulation - 1.0, 1.0, 0.0}, kSirStep, steps, every_step(steps),
                       sir_deriv(theta[0], theta[1], kSirPopulation), theta);
  return states_to_matrix<3>(states);
}

Matrix lv_trajectory(std::span<const double> theta) {
  if (theta.size() != 4) fail("lv_trajectory: theta must have four rates");
  const auto steps = static_cast<std::size_t>(std::llround(kLvHorizon / kLvStep));
  const auto states = integrate_rk4<2>({30.0, 1.0}, kLvStep, steps, every_step(steps),
                                       lv_deriv(theta[0], theta[1], theta[2], theta[3]), theta);
  return states_to_matrix<2>(states);
}

StandardScaler fit_scaler(const Matrix& data) {
  if (data.rows < 2) fail("fit_scaler: need at least two rows");
  StandardScaler s;
  s.mean.assign(data.cols, 0.0);
  s.std_dev.assign(data.cols, 0.0);
  s.flagged.assign(data.cols, 0);
  const double n = static_cast<double>(data.rows);
  for (std::size_t r = 0; r < data.rows; ++r)
    for (std::size_t c = 0; c < data.cols; ++c) s.mean[c] += data(r, c);
  for (double& m : s.mean) m /= n;
  for (std::size_t r = 0; r < data.rows; ++r)
    for (std::size_t c = 0; c < data.cols; ++c) {
      const double d = data(r, c) - s.mean[c];
      s.std_dev[c] += d * d;
    }
  for (std::size_t c = 0; c < data.cols; ++c) {
    s.std_dev[c] = std::sqrt(s.std_dev[c] / n);
    if (s.std_dev[c] < 1e-12) {
      s.std_dev[c] = 1.0;
      s.flagged[c] = 1;
    }
  }
  return s;
}

Matrix scale(const StandardScaler& s, const Matrix& data) {
  if (data.cols != s.mean.size()) fail("scale: column mismatch");
  Matrix out(data.rows, data.cols);
  for (std::size_t r = 0; r < data.rows; ++r)
    for (std::size_t c = 0; c < data.cols; ++c)
      out(r, c) = (data(r, c) - s.mean[c]) / s.std_dev[c];
  return out;
}

Matrix unscale(const StandardScaler& s, const Matrix& data) {
  if (data.cols != s.mean.size()) fail("unscale: column mismatch");
  Matrix out(data.rows, data.cols);
  for (std::size_t r = 0; r < data.rows; ++r)
    for (std::size_t c = 0; c < data.cols; ++c)
      out(r, c) = data(r, c) * s.std_dev[c] + s.mean[c];
  return out;
}

Vec scale_row(const StandardScaler& s, std::span<const double> row) {
  if (row.size() != s.mean.size()) fail("scale_row: column mismatch");
  Vec out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = (row[c] - s.mean[c]) / s.std_dev[c];
  return out;
}

Vec unscale_row(const StandardScaler& s, std::span<const double> row) {
  if (row.size() != s.mean.size()) fail("unscale_row: column mismatch");
  Vec out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = row[c] * s.std_dev[c] + s.mean[c];
  return out;
}

Dataset generate_dataset(const SimTask& task, std::size_t n, std::uint64_t seed) {
  if (n < 2) fail("generate_dataset: need n >= 2");
  Dataset ds;
  ds.task = task.id;
  ds.seed = seed;
  ds.thetas = Matrix(n, task.theta_dim);
  ds.ys = Matrix(n, task.y_dim);
  Rng master(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Rng row_rng = master.derive(i);
    Vec theta;
    Vec y;
    try {
      theta = prior_sample(task, row_rng);
      y = simulate(task, theta, row_rng);
    } catch (const SimError& e) {
      throw SimError("row " + std::to_string(i) + ": " + e.what(), e.theta);
    }
    for (std::size_t c = 0; c < task.theta_dim; ++c) ds.thetas(i, c) = theta[c];
    for (std::size_t c = 0; c < task.y_dim; ++c) ds.ys(i, c) = y[c];
  }
  ds.theta_scaler = fit_scaler(ds.thetas);
  ds.y_scaler = fit_scaler(ds.ys);
  return ds;
}

std::string dataset_hash(const Dataset& ds) {
  std::uint64_t h = fnv1a64_str(io::matrix_to_csv(ds.thetas));
  h = fnv1a64_str(io::matrix_to_csv(ds.ys), h);
  return hex64(h);
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  io::ensure_dir(dir);
  io::write_file(dir + "/thetas.csv", io::matrix_to_csv(ds.thetas));
  io::write_file(dir + "/ys.csv", io::matrix_to_csv(ds.ys));
  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["task"] = task_name(ds.task);
  meta["n"] = ds.thetas.rows;
  meta["theta_dim"] = ds.thetas.cols;
  meta["y_dim"] = ds.ys.cols;
  meta["seed"] = ds.seed;
  meta["hash"] = dataset_hash(ds);
  io::write_file(dir + "/meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const auto meta = nlohmann::json::parse(io::read_file(dir + "/meta.json"));
  if (meta.at("format_version").get<int>() != 1) fail("load_dataset: unsupported format");
  Dataset ds;
  ds.task = task_from_name(meta.at("task").get<std::string>());
  ds.seed = meta.at("seed").get<std::uint64_t>();
  ds.thetas = io::csv_to_matrix(io::read_file(dir + "/thetas.csv"));
  ds.ys = io::csv_to_matrix(io::read_file(dir + "/ys.csv"));
  if (ds.thetas.rows != meta.at("n").get<std::size_t>() ||
      ds.thetas.cols != meta.at("theta_dim").get<std::size_t>() ||
      ds.ys.rows != ds.thetas.rows || ds.ys.cols != meta.at("y_dim").get<std::size_t>())
    fail("load_dataset: dimensions do not match meta.json");
  if (dataset_hash(ds) != meta.at("hash").get<std::string>())
    fail("load_dataset: content hash mismatch");
  ds.theta_scaler = fit_scaler(ds.thetas);
  ds.y_scaler = fit_scaler(ds.ys);
  return ds;
}

}  // namespace amortis::sims
