#pragma once
// Small shared substrate: row-major matrix over contiguous doubles, hashing,
// finiteness checks, and a deterministic block-parallel loop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace amortis {

using Vec = std::vector<double>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;  // row-major, rows * cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

// Horizontal concatenation [a | b]; row counts must agree.
Matrix hconcat(const Matrix& a, const Matrix& b);

bool all_finite(std::span<const double> xs);
bool all_finite(const Matrix& m);

// FNV-1a, used for dataset and config fingerprints.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64_str(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);

// Runs body(begin, end) over contiguous chunks of [0, n). The chunk layout is a
// pure function of n and the worker count cap, so any per-chunk outputs can be
// merged in chunk order for schedule-independent results.
void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace amortis
