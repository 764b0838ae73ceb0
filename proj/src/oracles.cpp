#include "amortis/oracles.hpp"

#include <atomic>
#include <cmath>
#include <thread>

namespace amortis::oracles {

namespace {
constexpr double kPi = 3.1415926535897932384626433832795;
constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kSqrt2Pi = 2.5066282746310005024157652848110;
}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Rational approximation (central + tail branches) followed by one Halley
// refinement against the exact CDF; good to ~1e-15 across the open interval.
double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) fail("normal_quantile: p must lie in (0, 1)");

  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley step: e is the CDF error, u the Newton step under the exact pdf.
  const double e = normal_cdf(x) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

gauss::DiagGaussian conjugate_gaussian_posterior(std::span<const double> y0, double prior_var,
                                                 double lik_var) {
  if (y0.empty()) fail("conjugate_gaussian_posterior: empty observation");
  if (!(prior_var > 0.0) || !(lik_var > 0.0))
    fail("conjugate_gaussian_posterior: variances must be positive");
  gauss::DiagGaussian post;
  post.mean.resize(y0.size());
  post.var.resize(y0.size());
  const double v = 1.0 / (1.0 / prior_var + 1.0 / lik_var);
  const double shrink = prior_var / (prior_var + lik_var);
  for (std::size_t i = 0; i < y0.size(); ++i) {
    post.mean[i] = shrink * y0[i];
    post.var[i] = v;
  }
  return post;
}

Matrix sample_diag(const gauss::DiagGaussian& g, std::size_t n, Rng& rng) {
  if (n == 0) fail("sample_diag: need n > 0");
  Matrix out(n, g.mean.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < g.mean.size(); ++c)
      out(r, c) = g.mean[c] + std::sqrt(g.var[c]) * rng.normal();
  return out;
}

Matrix truncated_normal_posterior_sample(std::span<const double> y0, double lik_var, double lo,
                                         double hi, std::size_t n, Rng& rng) {
  if (y0.empty()) fail("truncated_normal_posterior_sample: empty observation");
  if (!(lik_var > 0.0)) fail("truncated_normal_posterior_sample: lik_var must be positive");
  if (!(lo < hi)) fail("truncated_normal_posterior_sample: need lo < hi");
  if (n == 0) fail("truncated_normal_posterior_sample: need n > 0");

  const double sd = std::sqrt(lik_var);
  Vec cdf_lo(y0.size()), cdf_hi(y0.size());
  for (std::size_t c = 0; c < y0.size(); ++c) {
    cdf_lo[c] = normal_cdf((lo - y0[c]) / sd);
    cdf_hi[c] = normal_cdf((hi - y0[c]) / sd);
    if (!(cdf_hi[c] > cdf_lo[c]))
      fail("truncated_normal_posterior_sample: no posterior mass inside the box");
  }

  Matrix out(n, y0.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < y0.size(); ++c) {
      const double u = rng.uniform01();
      const double p = cdf_lo[c] + u * (cdf_hi[c] - cdf_lo[c]);
      double x = y0[c] + sd * normal_quantile(p);
      x = std::min(hi, std::max(lo, x));  // guard inverse-CDF rounding
      out(r, c) = x;
    }
  return out;
}

namespace {

// Vose's alias method over the normalized weights.
void build_alias(GridPosterior& grid) {
  const std::size_t n = grid.weights.size();
  grid.alias_prob.assign(n, 0.0);
  grid.alias_idx.assign(n, 0);
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = grid.weights[i] * static_cast<double>(n);
  std::vector<std::uint32_t> small, large;
  small.reserve(n);
  large.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    small.pop_back();
    const std::uint32_t l = large.back();
    large.pop_back();
    grid.alias_prob[s] = scaled[s];
    grid.alias_idx[s] = l;
    scaled[l] = scaled[l] + scaled[s] - 1.0;
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (std::uint32_t i : large) grid.alias_prob[i] = 1.0;
  for (std::uint32_t i : small) grid.alias_prob[i] = 1.0;
}

GridPosterior make_grid(double lo, double hi, std::size_t resolution) {
  if (resolution < 2) fail("grid posterior: resolution too small");
  GridPosterior grid;
  const double width = (hi - lo) / static_cast<double>(resolution);
  grid.cell0 = grid.cell1 = width;
  grid.axis0.resize(resolution);
  grid.axis1.resize(resolution);
  for (std::size_t i = 0; i < resolution; ++i)
    grid.axis0[i] = grid.axis1[i] = lo + (static_cast<double>(i) + 0.5) * width;
  grid.weights.assign(resolution * resolution, 0.0);
  return grid;
}

void normalize_grid(GridPosterior& grid, const char* who) {
  double total = 0.0;
  for (double w : grid.weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(std::string(who) + ": invalid density value");
    total += w;
  }
  if (!(total > 0.0)) fail(std::string(who) + ": posterior mass vanishes on the grid");
  for (double& w : grid.weights) w /= total;
  build_alias(grid);
}

}  // namespace

GridPosterior two_moons_grid_posterior(std::span<const double> y0, std::size_t resolution) {
  if (y0.size() != 2) fail("two_moons_grid_posterior: y0 must be 2-dimensional");
  GridPosterior grid = make_grid(-1.0, 1.0, resolution);
  const double inv_sqrt2 = 1.0 / kSqrt2;
  const double r_mean = sims::kTwoMoonsRadiusMean;
  const double r_std = sims::kTwoMoonsRadiusStd;

  for (std::size_t i0 = 0; i0 < grid.axis0.size(); ++i0) {
    const double t0 = grid.axis0[i0];
    for (std::size_t i1 = 0; i1 < grid.axis1.size(); ++i1) {
      const double t1 = grid.axis1[i1];
      // Undo the theta-dependent shift, then move to the crescent's polar
      // coordinates around (offset, 0).
      const double u = y0[0] + std::abs(t0 + t1) * inv_sqrt2 - sims::kTwoMoonsOffset;
      const double v = y0[1] - (t1 - t0) * inv_sqrt2;
      const double r = std::hypot(u, v);
      double density = 0.0;
      if (u > 0.0 && r > 1e-9) {
        const double dr = (r - r_mean) / r_std;
        density = std::exp(-0.5 * dr * dr) / (kSqrt2Pi * r_std) * (1.0 / kPi) * (1.0 / r);
      }
      grid.weights[i0 * grid.axis1.size() + i1] = density;
    }
  }
  normalize_grid(grid, "two_moons_grid_posterior");
  return grid;
}

GridPosterior gmm_grid_posterior(std::span<const double> y0, std::size_t resolution) {
  if (y0.size() != 2) fail("gmm_grid_posterior: y0 must be 2-dimensional");
  GridPosterior grid = make_grid(-10.0, 10.0, resolution);
  const double v1 = sims::kGmmStd1 * sims::kGmmStd1;
  const double v2 = sims::kGmmStd2 * sims::kGmmStd2;
  const double n1 = 1.0 / (2.0 * kPi * v1);
  const double n2 = 1.0 / (2.0 * kPi * v2);

  for (std::size_t i0 = 0; i0 < grid.axis0.size(); ++i0) {
    const double d0 = y0[0] - grid.axis0[i0];
    for (std::size_t i1 = 0; i1 < grid.axis1.size(); ++i1) {
      const double d1 = y0[1] - grid.axis1[i1];
      const double sq = d0 * d0 + d1 * d1;
      grid.weights[i0 * grid.axis1.size() + i1] =
          0.5 * n1 * std::exp(-0.5 * sq / v1) + 0.5 * n2 * std::exp(-0.5 * sq / v2);
    }
  }
  normalize_grid(grid, "gmm_grid_posterior");
  return grid;
}

Matrix grid_sample(const GridPosterior& grid, std::size_t n, Rng& rng) {
  if (n == 0) fail("grid_sample: need n > 0");
  if (grid.alias_prob.empty()) fail("grid_sample: grid has no alias table");
  Matrix out(n, 2);
  const std::size_t n1 = grid.axis1.size();
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t cell = rng.below(grid.weights.size());
    if (rng.uniform01() >= grid.alias_prob[cell]) cell = grid.alias_idx[cell];
    const std::size_t i0 = cell / n1;
    const std::size_t i1 = cell % n1;
    out(r, 0) = grid.axis0[i0] + (rng.uniform01() - 0.5) * grid.cell0;
    out(r, 1) = grid.axis1[i1] + (rng.uniform01() - 0.5) * grid.cell1;
  }
  return out;
}

AbcResult rejection_abc(const sims::SimTask& task, std::span<const double> y0, double epsilon,
                        std::size_t n_accept, std::uint64_t seed) {
  if (y0.size() != task.y_dim) fail("rejection_abc: observation dim mismatch");
  if (!(epsilon > 0.0)) fail("rejection_abc: epsilon must be positive");
  if (n_accept == 0) fail("rejection_abc: need n_accept > 0");

  std::size_t workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (workers > 8) workers = 8;
  if (workers > n_accept) workers = n_accept;

  // Fixed per-worker quotas + per-worker streams: the concatenated result is
  // the same regardless of how the workers are scheduled.
  std::vector<std::size_t> quota(workers, n_accept / workers);
  for (std::size_t w = 0; w < n_accept % workers; ++w) ++quota[w];

  constexpr std::uint64_t kTrialBudget = 20'000'000;
  std::vector<Matrix> accepted(workers);
  std::vector<std::uint64_t> proposals(workers, 0);
  std::atomic<bool> hopeless{false};

  parallel_blocks(workers, [&](std::size_t w0, std::size_t w1) {
    for (std::size_t w = w0; w < w1; ++w) {
      Rng rng(mix_seed(seed, 1000 + w));
      Matrix& acc = accepted[w];
      acc = Matrix(quota[w], task.theta_dim);
      std::size_t got = 0;
      while (got < quota[w]) {
        if (hopeless.load(std::memory_order_relaxed)) return;
        const Vec theta = sims::prior_sample(task, rng);
        const Vec y = sims::simulate(task, theta, rng);
        double sq = 0.0;
        for (std::size_t c = 0; c < y.size(); ++c) {
          const double d = y[c] - y0[c];
          sq += d * d;
        }
        ++proposals[w];
        if (sq <= epsilon * epsilon) {
          for (std::size_t c = 0; c < task.theta_dim; ++c) acc(got, c) = theta[c];
          ++got;
        }
        if (proposals[w] >= kTrialBudget / workers &&
            static_cast<double>(got) < 1e-7 * static_cast<double>(proposals[w]))
          hopeless.store(true, std::memory_order_relaxed);
      }
    }
  });

  if (hopeless.load())
    fail("rejection_abc: acceptance rate below 1e-7 over the trial budget; "
         "increase epsilon");

  AbcResult res;
  res.samples = Matrix(n_accept, task.theta_dim);
  std::size_t row = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    for (std::size_t r = 0; r < quota[w]; ++r, ++row)
      for (std::size_t c = 0; c < task.theta_dim; ++c)
        res.samples(row, c) = accepted[w](r, c);
    res.proposals += proposals[w];
  }
  res.acceptance_rate =
      static_cast<double>(n_accept) / static_cast<double>(std::max<std::uint64_t>(1, res.proposals));
  return res;
}

}  // namespace amortis::oracles
