#include <doctest.h>

#include <cmath>

#include "amortis/metrics.hpp"
#include "amortis/rng.hpp"

using namespace amortis;

namespace {
Matrix gaussian_rows(std::size_t n, std::size_t d, double mean, double sd, Rng& rng) {
  Matrix m(n, d);
  for (auto& v : m.data) v = rng.normal(mean, sd);
  return m;
}
}  // namespace

TEST_CASE("median heuristic on pinned point sets") {
  Matrix two(2, 1);
  two(0, 0) = 0.0;
  two(1, 0) = 2.0;
  metrics::BandwidthInfo info;
  CHECK(metrics::median_heuristic_bandwidth(two, &info) == 2.0);
  CHECK_FALSE(info.degenerate);

  // Four collinear points: distances {1,1,1,2,2,3}, median (1+2)/2.
  Matrix four(4, 1);
  for (std::size_t i = 0; i < 4; ++i) four(i, 0) = static_cast<double>(i);
  CHECK(metrics::median_heuristic_bandwidth(four) == doctest::Approx(1.5).epsilon(1e-12));

  // Identical rows: no positive distance; flagged and fell back to 1.
  Matrix same(5, 2, 3.0);
  CHECK(metrics::median_heuristic_bandwidth(same, &info) == 1.0);
  CHECK(info.degenerate);
}

TEST_CASE("mmd2 is zero on identical inputs and positive under shifts") {
  Rng rng(500);
  const Matrix a = gaussian_rows(300, 2, 0.0, 1.0, rng);
  const auto self = metrics::mmd2(a, a);
  CHECK(self.value == 0.0);

  const Matrix b = gaussian_rows(300, 2, 1.0, 1.0, rng);
  const Matrix c = gaussian_rows(300, 2, 3.0, 1.0, rng);
  const auto ab = metrics::mmd2(a, b);
  const auto ac = metrics::mmd2(a, c);
  CHECK(ab.value > 0.0);
  CHECK(ac.value > ab.value);
  CHECK(ab.bandwidths.size() == 3);
  CHECK(ab.bandwidths[1] == doctest::Approx(2.0 * ab.bandwidths[0]).epsilon(1e-12));
  CHECK(ab.bandwidths[2] == doctest::Approx(4.0 * ab.bandwidths[0]).epsilon(1e-12));
}

TEST_CASE("mmd2 is symmetric") {
  Rng rng(501);
  const Matrix a = gaussian_rows(200, 3, 0.0, 1.0, rng);
  const Matrix b = gaussian_rows(150, 3, 0.5, 1.2, rng);
  const Vec bw{0.5, 1.0, 2.0};
  const auto ab = metrics::mmd2(a, b, bw);
  const auto ba = metrics::mmd2(b, a, bw);
  CHECK(ab.value == doctest::Approx(ba.value).epsilon(1e-12));
}

TEST_CASE("mmd2 with explicit bandwidths matches the direct formula on a tiny case") {
  // Two one-point sets at distance d: mmd2 = k(0) + k(0) - 2 k(d) per kernel.
  Matrix p(1, 1), q(1, 1);
  p(0, 0) = 0.0;
  q(0, 0) = 1.5;
  const Vec bw{1.0};
  const auto res = metrics::mmd2(p, q, bw);
  const double expect = 2.0 - 2.0 * std::exp(-0.5 * 1.5 * 1.5);
  CHECK(res.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mmd2 validates inputs") {
  Matrix a(3, 2), b(3, 3);
  CHECK_THROWS((void)metrics::mmd2(a, b));
  Matrix empty(0, 2);
  CHECK_THROWS((void)metrics::mmd2(empty, a));
  Matrix c(3, 2);
  const Vec bad{-1.0};
  CHECK_THROWS((void)metrics::mmd2(a, c, bad));
}

TEST_CASE("c2st sits at chance on identical distributions") {
  Rng rng(502);
  const Matrix a = gaussian_rows(400, 2, 0.0, 1.0, rng);
  const Matrix b = gaussian_rows(400, 2, 0.0, 1.0, rng);
  metrics::C2stConfig cfg;
  cfg.folds = 3;
  cfg.epochs = 40;
  const double acc = metrics::c2st(a, b, 7, cfg);
  CHECK(acc > 0.40);
  CHECK(acc < 0.60);
}

TEST_CASE("c2st detects clearly separated distributions") {
  Rng rng(503);
  const Matrix a = gaussian_rows(300, 2, 0.0, 0.1, rng);
  const Matrix b = gaussian_rows(300, 2, 2.0, 0.1, rng);
  metrics::C2stConfig cfg;
  cfg.folds = 3;
  cfg.epochs = 40;
  const double acc = metrics::c2st(a, b, 7, cfg);
  CHECK(acc > 0.95);
}

TEST_CASE("c2st is deterministic given the seed") {
  Rng rng(504);
  const Matrix a = gaussian_rows(200, 2, 0.0, 1.0, rng);
  const Matrix b = gaussian_rows(200, 2, 0.7, 1.0, rng);
  metrics::C2stConfig cfg;
  cfg.folds = 2;
  cfg.epochs = 20;
  const double x = metrics::c2st(a, b, 99, cfg);
  const double y = metrics::c2st(a, b, 99, cfg);
  CHECK(x == y);
  const double z = metrics::c2st(a, b, 100, cfg);
  CHECK(x != z);  // different fold assignment / classifier seeds
}

TEST_CASE("c2st validates inputs") {
  Matrix a(10, 2), b(10, 3);
  CHECK_THROWS((void)metrics::c2st(a, b, 1));
  Matrix tiny(2, 2);
  metrics::C2stConfig cfg;
  cfg.folds = 5;
  CHECK_THROWS((void)metrics::c2st(tiny, tiny, 1, cfg));
}
