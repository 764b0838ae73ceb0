#pragma once
// Sample-based distribution comparisons.
//
//  * mmd2: biased (V-statistic) squared maximum mean discrepancy under a sum
//    of Gaussian kernels at {h/2, h, 2h} around a median-heuristic bandwidth.
//    Identical inputs give exactly zero.
//  * c2st: classifier two-sample test. Samples are jointly standardized,
//    labeled, and split into stratified folds; a small ReLU classifier is
//    trained per fold and the mean held-out accuracy is returned (0.5 means
//    the classifier cannot tell the sets apart).

#include <cstdint>
#include <optional>

#include "amortis/common.hpp"

namespace amortis::metrics {

struct BandwidthInfo {
  double median = 0.0;   // median pairwise distance actually used
  bool degenerate = false;  // no positive pairwise distance; fell back to 1.0
};

// Median pairwise Euclidean distance over the rows (an evenly strided subset
// of at most `cap` rows keeps the cost bounded and the result deterministic).
double median_heuristic_bandwidth(const Matrix& rows, BandwidthInfo* info = nullptr,
                                  std::size_t cap = 2000);

// Squared MMD between row sets p and q under sum_b exp(-d^2 / (2 b^2)).
// Bandwidths must be positive. Negative rounding noise is clamped to zero.
struct MmdResult {
  double value = 0.0;
  bool clamped = false;
  std::vector<double> bandwidths;
};
MmdResult mmd2(const Matrix& p, const Matrix& q, std::span<const double> bandwidths);
// Convenience: bandwidths {h/2, h, 2h} from the median heuristic on p union q.
MmdResult mmd2(const Matrix& p, const Matrix& q, BandwidthInfo* info = nullptr);

struct C2stConfig {
  std::size_t folds = 5;
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::size_t width_factor = 10;  // hidden width = width_factor * dim
};

// Mean held-out accuracy over stratified folds; 0.5 = indistinguishable,
// 1.0 = perfectly separable. Deterministic given (p, q, seed, config).
double c2st(const Matrix& p, const Matrix& q, std::uint64_t seed,
            const C2stConfig& cfg = {});

}  // namespace amortis::metrics
