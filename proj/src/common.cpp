#include "amortis/common.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

namespace amortis {

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) fail("hconcat: row counts differ");
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* dst = out.data.data() + r * out.cols;
    const double* pa = a.data.data() + r * a.cols;
    const double* pb = b.data.data() + r * b.cols;
    for (std::size_t c = 0; c < a.cols; ++c) dst[c] = pa[c];
    for (std::size_t c = 0; c < b.cols; ++c) dst[a.cols + c] = pb[c];
  }
  return out;
}

bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Matrix& m) { return all_finite(std::span<const double>(m.data)); }

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64_str(const std::string& s, std::uint64_t h) {
  return fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()}, h);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (workers > 8) workers = 8;
  if (workers > n) workers = n;
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace amortis
