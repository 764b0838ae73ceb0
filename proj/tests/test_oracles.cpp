#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "amortis/oracles.hpp"
#include "amortis/rng.hpp"
#include "amortis/sims.hpp"

using namespace amortis;

TEST_CASE("normal cdf and quantile invert each other") {
  CHECK(oracles::normal_cdf(0.0) == 0.5);
  CHECK(oracles::normal_quantile(0.5) == 0.0);
  CHECK(oracles::normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  for (const double x : {-5.0, -3.0, -1.2, -0.1, 0.0, 0.4, 1.7, 3.0, 5.0}) {
    const double back = oracles::normal_quantile(oracles::normal_cdf(x));
    CHECK(std::abs(back - x) < (std::abs(x) <= 3.0 ? 1e-12 : 1e-9));
  }
  for (const double p : {1e-12, 0.01, 0.3, 0.9999}) {
    const double fwd = oracles::normal_cdf(oracles::normal_quantile(p));
    CHECK(fwd == doctest::Approx(p).epsilon(1e-9));
  }
  // Monotone.
  CHECK(oracles::normal_quantile(0.2) < oracles::normal_quantile(0.2000001));
  CHECK_THROWS((void)oracles::normal_quantile(0.0));
  CHECK_THROWS((void)oracles::normal_quantile(1.0));
  CHECK_THROWS((void)oracles::normal_quantile(-0.5));
}

TEST_CASE("conjugate gaussian posterior has the closed form") {
  const Vec y0{1.0, -2.0};
  const auto post = oracles::conjugate_gaussian_posterior(y0, 0.1, 0.1);
  REQUIRE(post.mean.size() == 2);
  // Equal prior and likelihood variances shrink the observation by half.
  CHECK(post.mean[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(post.mean[1] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(post.var[0] == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(post.var[1] == doctest::Approx(0.05).epsilon(1e-14));
  // General case: precision-weighted mean.
  const auto g = oracles::conjugate_gaussian_posterior(Vec{2.0}, 0.4, 0.1);
  CHECK(g.var[0] == doctest::Approx(1.0 / (1.0 / 0.4 + 1.0 / 0.1)).epsilon(1e-14));
  CHECK(g.mean[0] == doctest::Approx(g.var[0] * 2.0 / 0.1).epsilon(1e-14));
}

TEST_CASE("sample_diag matches its distribution") {
  gauss::DiagGaussian g{{1.0, -0.5}, {0.25, 2.0}};
  Rng rng(404);
  const Matrix s = oracles::sample_diag(g, 50000, rng);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < s.rows; ++r) m += s(r, c);
    m /= static_cast<double>(s.rows);
    for (std::size_t r = 0; r < s.rows; ++r) v += (s(r, c) - m) * (s(r, c) - m);
    v /= static_cast<double>(s.rows);
    CHECK(std::abs(m - g.mean[c]) < 0.02);
    CHECK(v == doctest::Approx(g.var[c]).epsilon(0.05));
  }
}

TEST_CASE("truncated normal posterior respects the box exactly") {
  Rng rng(405);
  // +/-2 sits ~10 sd outside the box center yet keeps resolvable tail mass;
  // much further out the cdf saturates and the sampler (correctly) refuses.
  const Vec y0{0.3, 2.0, -2.0};
  const Matrix s = oracles::truncated_normal_posterior_sample(y0, 0.1, -1.0, 1.0, 20000, rng);
  REQUIRE(s.cols == 3);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(s(r, c) >= -1.0);
      CHECK(s(r, c) <= 1.0);
    }
  // Column 0: truncated normal around 0.3 with sd sqrt(0.1); closed-form mean.
  const double sd = std::sqrt(0.1);
  const double a = (-1.0 - 0.3) / sd, b = (1.0 - 0.3) / sd;
  const double phi_a = std::exp(-0.5 * a * a) / std::sqrt(2.0 * 3.14159265358979323846);
  const double phi_b = std::exp(-0.5 * b * b) / std::sqrt(2.0 * 3.14159265358979323846);
  const double z = oracles::normal_cdf(b) - oracles::normal_cdf(a);
  const double expect_mean = 0.3 + sd * (phi_a - phi_b) / z;
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    m0 += s(r, 0);
    m1 += s(r, 1);
    m2 += s(r, 2);
  }
  m0 /= static_cast<double>(s.rows);
  m1 /= static_cast<double>(s.rows);
  m2 /= static_cast<double>(s.rows);
  CHECK(std::abs(m0 - expect_mean) < 0.01);
  // Observations far outside the box pile mass against the edge.
  CHECK(m1 > 0.8);
  CHECK(m2 < -0.8);
}

TEST_CASE("grid alias sampling reproduces the cell weights") {
  oracles::GridPosterior grid;
  grid.axis0 = {0.0, 1.0};
  grid.axis1 = {0.0};
  grid.cell0 = 0.5;
  grid.cell1 = 0.25;
  grid.weights = {0.25, 0.75};
  // Alias table for two cells: cell 0 keeps p = 0.5 (0.25 * 2), else -> 1.
  grid.alias_prob = {0.5, 1.0};
  grid.alias_idx = {1, 1};
  Rng rng(406);
  const Matrix s = oracles::grid_sample(grid, 40000, rng);
  std::size_t hi = 0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    if (s(r, 0) > 0.5) ++hi;
    // Jitter stays inside the owning cell.
    const double c0 = s(r, 0) > 0.5 ? 1.0 : 0.0;
    CHECK(std::abs(s(r, 0) - c0) <= 0.25 + 1e-12);
    CHECK(std::abs(s(r, 1) - 0.0) <= 0.125 + 1e-12);
  }
  CHECK(static_cast<double>(hi) / 40000.0 == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("two moons grid posterior is a normalized bimodal density") {
  const Vec y0{0.0, 0.0};
  const auto grid = oracles::two_moons_grid_posterior(y0, 128);
  REQUIRE(grid.axis0.size() == 128);
  REQUIRE(grid.axis1.size() == 128);
  double sum = 0.0, w_min = 1.0;
  for (const double w : grid.weights) {
    sum += w;
    w_min = std::min(w_min, w);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(w_min >= 0.0);
  Rng rng(407);
  const Matrix s = oracles::grid_sample(grid, 5000, rng);
  std::size_t upper = 0, lower = 0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    CHECK(s(r, 0) >= -1.0 - 1e-9);
    CHECK(s(r, 0) <= 1.0 + 1e-9);
    CHECK(s(r, 1) >= -1.0 - 1e-9);
    CHECK(s(r, 1) <= 1.0 + 1e-9);
    // theta0 + theta1 splits the two crescents for this observation.
    if (s(r, 0) + s(r, 1) > 0.0) ++upper;
    else ++lower;
  }
  // Both branches carry real mass.
  CHECK(upper > s.rows / 10);
  CHECK(lower > s.rows / 10);
}

TEST_CASE("gaussian mixture grid posterior concentrates around the observation") {
  const Vec y0{3.0, -4.0};
  const auto grid = oracles::gmm_grid_posterior(y0, 128);
  double sum = 0.0;
  for (const double w : grid.weights) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  Rng rng(408);
  const Matrix s = oracles::grid_sample(grid, 4000, rng);
  double m0 = 0.0, m1 = 0.0;
  std::size_t near = 0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    CHECK(std::abs(s(r, 0)) <= 10.0 + 1e-9);
    CHECK(std::abs(s(r, 1)) <= 10.0 + 1e-9);
    m0 += s(r, 0);
    m1 += s(r, 1);
    if (std::hypot(s(r, 0) - y0[0], s(r, 1) - y0[1]) < 1.5) ++near;
  }
  CHECK(m0 / static_cast<double>(s.rows) == doctest::Approx(3.0).epsilon(0.1));
  CHECK(m1 / static_cast<double>(s.rows) == doctest::Approx(-4.0).epsilon(0.1));
  // Posterior mass sits around theta = y0, dominated by the narrow component.
  CHECK(static_cast<double>(near) / static_cast<double>(s.rows) > 0.8);
}

TEST_CASE("grid posteriors are deterministic in their inputs") {
  const Vec y0{0.1, -0.2};
  const auto a = oracles::two_moons_grid_posterior(y0, 64);
  const auto b = oracles::two_moons_grid_posterior(y0, 64);
  CHECK(a.weights == b.weights);
  Rng r1(9), r2(9);
  CHECK(oracles::grid_sample(a, 100, r1).data == oracles::grid_sample(b, 100, r2).data);
}

TEST_CASE("rejection abc accepts near the observation and is seeded") {
  const auto task = sims::make_task(sims::TaskId::TwoMoons);
  // A point on the crescent for theta near (0.1, -0.3).
  Rng obs_rng(410);
  const Vec theta_true{0.1, -0.3};
  const Vec y0 = sims::simulate(task, theta_true, obs_rng);
  const auto res = oracles::rejection_abc(task, y0, 0.2, 200, 42);
  REQUIRE(res.samples.rows == 200);
  REQUIRE(res.samples.cols == 2);
  CHECK(res.proposals >= 200);
  CHECK(res.acceptance_rate > 0.0);
  CHECK(res.acceptance_rate <= 1.0);
  for (std::size_t r = 0; r < res.samples.rows; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(res.samples(r, c) >= -1.0);
      CHECK(res.samples(r, c) <= 1.0);
    }
  const auto again = oracles::rejection_abc(task, y0, 0.2, 200, 42);
  CHECK(again.samples.data == res.samples.data);
  CHECK(again.proposals == res.proposals);
  // Accepted parameters actually reproduce the observation.
  Rng check_rng(411);
  double mean_dist = 0.0;
  for (std::size_t r = 0; r < 50; ++r) {
    const Vec y = sims::simulate(task, res.samples.row(r), check_rng);
    mean_dist += std::hypot(y[0] - y0[0], y[1] - y0[1]);
  }
  // Resimulation spread includes fresh crescent noise on top of the ABC
  // tolerance; random prior draws would sit several times further out.
  CHECK(mean_dist / 50.0 < 0.4);
}

TEST_CASE("rejection abc gives up on hopeless tolerances") {
  const auto task = sims::make_task(sims::TaskId::TwoMoons);
  const Vec y0{50.0, 50.0};  // far outside anything the simulator can produce
  CHECK_THROWS((void)oracles::rejection_abc(task, y0, 1e-6, 10, 1));
}

TEST_CASE("rejection abc validates its arguments") {
  const auto task = sims::make_task(sims::TaskId::TwoMoons);
  const Vec y0{0.0, 0.0};
  CHECK_THROWS((void)oracles::rejection_abc(task, y0, -1.0, 10, 1));
  CHECK_THROWS((void)oracles::rejection_abc(task, y0, 0.1, 0, 1));
  CHECK_THROWS((void)oracles::rejection_abc(task, Vec{0.0}, 0.1, 10, 1));
}
