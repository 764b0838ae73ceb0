#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>

#include "amortis/common.hpp"
#include "amortis/io.hpp"
#include "amortis/rng.hpp"

using namespace amortis;

TEST_CASE("matrix layout and row views") {
  Matrix m(2, 3);
  m(0, 0) = 1.0;
  m(0, 2) = 3.0;
  m(1, 1) = 5.0;
  CHECK(m.data[0] == 1.0);
  CHECK(m.data[2] == 3.0);
  CHECK(m.data[4] == 5.0);
  auto r1 = m.row(1);
  CHECK(r1.size() == 3);
  CHECK(r1[1] == 5.0);
  r1[2] = 7.0;
  CHECK(m(1, 2) == 7.0);
}

TEST_CASE("hconcat stitches rows side by side") {
  Matrix a(2, 2), b(2, 1);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 3;
  a(1, 1) = 4;
  b(0, 0) = 5;
  b(1, 0) = 6;
  const Matrix c = hconcat(a, b);
  CHECK(c.rows == 2);
  CHECK(c.cols == 3);
  CHECK(c(0, 2) == 5);
  CHECK(c(1, 0) == 3);
  CHECK(c(1, 2) == 6);
  Matrix bad(3, 1);
  CHECK_THROWS(hconcat(a, bad));
}

TEST_CASE("all_finite flags nan and inf") {
  Vec ok{1.0, -2.0, 0.0};
  CHECK(all_finite(std::span<const double>(ok)));
  Vec bad{1.0, std::nan("")};
  CHECK_FALSE(all_finite(std::span<const double>(bad)));
  Matrix m(1, 2);
  m(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(m));
}

TEST_CASE("fnv1a64 matches reference values") {
  // Standard FNV-1a test vectors.
  CHECK(fnv1a64_str("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64_str("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64_str("foobar") == 0x85944171f73967e8ull);
  CHECK(hex64(0xabcull) == "0000000000000abc");
}

TEST_CASE("parallel_blocks covers the range exactly once in order") {
  std::vector<std::pair<std::size_t, std::size_t>> chunks;
  std::mutex mu;
  parallel_blocks(1000, [&](std::size_t b, std::size_t e) {
    std::lock_guard<std::mutex> lock(mu);
    chunks.emplace_back(b, e);
  });
  std::sort(chunks.begin(), chunks.end());
  std::size_t expect = 0;
  for (const auto& [b, e] : chunks) {
    CHECK(b == expect);
    CHECK(e > b);
    expect = e;
  }
  CHECK(expect == 1000);
}

TEST_CASE("rng streams are reproducible and seed-keyed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform01();
    CHECK(x == b.uniform01());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  CHECK(a.normal() == b.normal());
  CHECK(c.uniform01() != doctest::Approx(Rng(42).uniform01()).epsilon(0));

  // Derived streams depend on the seed only, not on consumption so far.
  Rng fresh(42);
  Rng spent(42);
  for (int i = 0; i < 17; ++i) spent.normal();
  CHECK(fresh.derive(7).uniform01() == spent.derive(7).uniform01());
}

TEST_CASE("rng normal moments") {
  Rng rng(123);
  const std::size_t n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng below is in range and roughly uniform") {
  Rng rng(7);
  std::vector<std::size_t> count(10, 0);
  for (int i = 0; i < 100000; ++i) {
    const auto v = rng.below(10);
    REQUIRE(v < 10);
    ++count[v];
  }
  for (const auto c : count) CHECK(std::abs(static_cast<double>(c) - 10000.0) < 400.0);
}

TEST_CASE("rng shuffle is a permutation") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng rng(9);
  rng.shuffle(v);
  std::set<int> seen(v.begin(), v.end());
  CHECK(seen.size() == 50);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 49);
}

TEST_CASE("csv round-trip preserves doubles exactly") {
  Matrix m(2, 3);
  Rng rng(1);
  for (auto& x : m.data) x = rng.normal() * 1e-7;
  m(1, 2) = 1.0 / 3.0;
  const std::string csv = io::matrix_to_csv(m);
  const Matrix back = io::csv_to_matrix(csv);
  REQUIRE(back.same_shape(m));
  for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(back.data[i] == m.data[i]);
}

TEST_CASE("csv rejects ragged rows") {
  CHECK_THROWS(io::csv_to_matrix("1,2\n3\n"));
}
