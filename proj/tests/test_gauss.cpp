#include <doctest.h>

#include <cmath>

#include "amortis/gauss.hpp"
#include "amortis/rng.hpp"

using namespace amortis;
using gauss::DiagGaussian;
using gauss::VarianceActivation;

TEST_CASE("log_density pinned values") {
  // Standard normal at the origin: -log(sqrt(2 pi)).
  DiagGaussian std1{{0.0}, {1.0}};
  CHECK(gauss::log_density(Vec{0.0}, std1) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));
  // Shifted/scaled: log N(1; 2, 4) = -0.5*log(2 pi 4) - (1-2)^2/8.
  DiagGaussian g{{2.0}, {4.0}};
  const double expect = -0.5 * std::log(2.0 * 3.14159265358979323846 * 4.0) - 1.0 / 8.0;
  CHECK(gauss::log_density(Vec{1.0}, g) == doctest::Approx(expect).epsilon(1e-12));
  // Factorizes over dimensions.
  DiagGaussian g2{{2.0, 0.0}, {4.0, 1.0}};
  CHECK(gauss::log_density(Vec{1.0, 0.0}, g2) ==
        doctest::Approx(expect - 0.9189385332046727).epsilon(1e-12));
}

TEST_CASE("kl_diag pinned values and identities") {
  DiagGaussian q{{0.0}, {2.0}};
  DiagGaussian p{{0.0}, {1.0}};
  // 0.5 * (1 - ln 2)
  CHECK(gauss::kl_diag(q, p) == doctest::Approx(0.5 * (1.0 - std::log(2.0))).epsilon(1e-12));
  CHECK(gauss::kl_diag(q, q) == 0.0);
  DiagGaussian m{{3.0, 4.0}, {1.0, 1.0}};
  CHECK(gauss::kl_vs_standard(m) == doctest::Approx(12.5).epsilon(1e-12));
  DiagGaussian s{{0.0, 0.0}, {1.0, 1.0}};
  CHECK(gauss::kl_vs_standard(s) == 0.0);
  // Tiny equal variances stay exactly zero (log-space ratio).
  DiagGaussian tq{{0.5}, {1e-300}};
  CHECK(gauss::kl_diag(tq, tq) == 0.0);
  // kl_diag and kl_vs_standard agree on the standard reference.
  DiagGaussian r{{0.3, -1.0}, {0.7, 2.5}};
  CHECK(gauss::kl_diag(r, {{0.0, 0.0}, {1.0, 1.0}}) ==
        doctest::Approx(gauss::kl_vs_standard(r)).epsilon(1e-14));
}

TEST_CASE("kl_diag matches a Monte Carlo estimate") {
  DiagGaussian q{{0.4, -0.8, 1.2}, {0.5, 2.0, 0.9}};
  DiagGaussian p{{-0.2, 0.3, 0.6}, {1.5, 0.7, 1.1}};
  const double exact = gauss::kl_diag(q, p);
  Rng rng(2024);
  const std::size_t n = 400000;
  double acc = 0.0;
  Vec z(3), noise(3);
  for (std::size_t i = 0; i < n; ++i) {
    rng.fill_normal(noise);
    z = gauss::reparam_sample(q, noise);
    acc += gauss::log_density(z, q) - gauss::log_density(z, p);
  }
  const double mc = acc / static_cast<double>(n);
  CHECK(exact == doctest::Approx(mc).epsilon(0.02));
}

TEST_CASE("reparam_sample is mean + sqrt(var) * noise") {
  DiagGaussian g{{1.0, -2.0}, {4.0, 0.25}};
  const Vec z = gauss::reparam_sample(g, Vec{0.5, -1.0});
  CHECK(z[0] == doctest::Approx(1.0 + 2.0 * 0.5).epsilon(1e-15));
  CHECK(z[1] == doctest::Approx(-2.0 - 0.5).epsilon(1e-15));
  CHECK_THROWS(gauss::reparam_sample(g, Vec{0.5}));
}

TEST_CASE("explin values, continuity, and gradient") {
  CHECK(gauss::explin(0.0) == 1.0);
  CHECK(gauss::explin(1.0) == 2.0);
  CHECK(gauss::explin(-1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(gauss::explin(5.0) == 6.0);
  // C1 continuity at the seam.
  CHECK(gauss::explin(1e-12) == doctest::Approx(gauss::explin(-1e-12)).epsilon(1e-9));
  CHECK(gauss::explin_grad(0.0) == 1.0);
  CHECK(gauss::explin_grad(2.0) == 1.0);
  for (const double p : {-3.0, -0.7, -0.1, 0.2, 1.7}) {
    const double h = 1e-6;
    const double fd = (gauss::explin(p + h) - gauss::explin(p - h)) / (2 * h);
    CHECK(gauss::explin_grad(p) == doctest::Approx(fd).epsilon(1e-6));
  }
  // Always positive, monotone.
  CHECK(gauss::explin(-700.0) > 0.0);
  CHECK(gauss::explin(-1.0) < gauss::explin(0.0));
}

TEST_CASE("upbounded_sigmoid range, midpoint, and gradient") {
  const double alpha = 1e-4, omega = 4.0;
  CHECK(gauss::upbounded_sigmoid(0.0, alpha, omega) ==
        doctest::Approx(alpha + 0.5 * (omega - alpha)).epsilon(1e-15));
  // Far in the tails the sigmoid saturates; the bounds must hold as closed
  // limits there and strictly at inputs where double precision can resolve
  // the gap.
  CHECK(gauss::upbounded_sigmoid(-100.0, alpha, omega) >= alpha);
  CHECK(gauss::upbounded_sigmoid(-100.0, alpha, omega) < alpha + 1e-8);
  CHECK(gauss::upbounded_sigmoid(100.0, alpha, omega) <= omega);
  CHECK(gauss::upbounded_sigmoid(100.0, alpha, omega) > omega - 1e-8);
  CHECK(gauss::upbounded_sigmoid(-30.0, alpha, omega) > alpha);
  CHECK(gauss::upbounded_sigmoid(30.0, alpha, omega) < omega);
  for (const double p : {-4.0, -1.0, 0.0, 0.5, 3.0}) {
    const double h = 1e-6;
    const double fd = (gauss::upbounded_sigmoid(p + h, alpha, omega) -
                       gauss::upbounded_sigmoid(p - h, alpha, omega)) /
                      (2 * h);
    CHECK(gauss::upbounded_sigmoid_grad(p, alpha, omega) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("variance activation log form never underflows") {
  const auto el = VarianceActivation::exp_lin();
  // Moderate inputs: log_apply == log(apply).
  for (const double p : {-5.0, -1.0, 0.0, 0.3, 2.0}) {
    CHECK(el.log_apply(p) == doctest::Approx(std::log(el.apply(p))).epsilon(1e-12));
    CHECK(el.log_grad(p) == doctest::Approx(el.grad(p) / el.apply(p)).epsilon(1e-12));
  }
  // Deep negative: apply underflows to 0 but the log form stays exact.
  CHECK(el.apply(-800.0) == 0.0);
  CHECK(el.log_apply(-800.0) == -800.0);
  CHECK(el.log_grad(-800.0) == 1.0);

  const auto ub = VarianceActivation::up_bounded();
  for (const double p : {-6.0, -1.0, 0.0, 1.0, 6.0}) {
    CHECK(ub.log_apply(p) == doctest::Approx(std::log(ub.apply(p))).epsilon(1e-12));
    const double h = 1e-6;
    const double fd = (ub.log_apply(p + h) - ub.log_apply(p - h)) / (2 * h);
    CHECK(ub.log_grad(p) == doctest::Approx(fd).epsilon(1e-5));
  }
  // Bounded below by alpha even far out.
  CHECK(ub.log_apply(-1000.0) == doctest::Approx(std::log(1e-4)).epsilon(1e-9));
}
