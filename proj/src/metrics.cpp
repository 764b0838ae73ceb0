#include "amortis/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "amortis/nn.hpp"
#include "amortis/rng.hpp"

namespace amortis::metrics {

namespace {

void check_rows(const Matrix& p, const Matrix& q, const char* who) {
  if (p.rows == 0 || q.rows == 0) fail(std::string(who) + ": empty sample set");
  if (p.cols != q.cols) fail(std::string(who) + ": column dims differ");
  if (!all_finite(p) || !all_finite(q)) fail(std::string(who) + ": non-finite samples");
}

Vec row_sq_norms(const Matrix& m) {
  Vec out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* x = m.data.data() + r * m.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += x[c] * x[c];
    out[r] = acc;
  }
  return out;
}

// Sum over all (i, j) pairs of the multi-bandwidth kernel between a's rows
// and b's rows. Partial sums are accumulated per row block and merged in
// block order, so the result does not depend on thread scheduling.
double kernel_sum(const Matrix& a, const Matrix& b, const Vec& na, const Vec& nb,
                  std::span<const double> inv_two_bw_sq) {
  std::vector<double> partial;
  const std::size_t block = 256;
  const std::size_t blocks = (a.rows + block - 1) / block;
  partial.assign(blocks, 0.0);
  parallel_blocks(blocks, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t bi = b0; bi < b1; ++bi) {
      const std::size_t r0 = bi * block;
      const std::size_t r1 = std::min(a.rows, r0 + block);
      double acc = 0.0;
      for (std::size_t i = r0; i < r1; ++i) {
        const double* xi = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
          const double* xj = b.data.data() + j * b.cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < a.cols; ++c) dot += xi[c] * xj[c];
          const double d2 = std::max(0.0, na[i] + nb[j] - 2.0 * dot);
          for (double g : inv_two_bw_sq) acc += std::exp(-d2 * g);
        }
      }
      partial[bi] = acc;
    }
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace

double median_heuristic_bandwidth(const Matrix& rows, BandwidthInfo* info, std::size_t cap) {
  if (rows.rows < 2) fail("median_heuristic_bandwidth: need at least two rows");
  if (cap < 2) fail("median_heuristic_bandwidth: cap too small");

  // Evenly strided subsample: deterministic and order-stable.
  std::vector<std::size_t> idx;
  const std::size_t n = rows.rows;
  if (n <= cap) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  } else {
    idx.resize(cap);
    for (std::size_t i = 0; i < cap; ++i) idx[i] = i * (n - 1) / (cap - 1);
  }

  Vec dists;
  dists.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const double* xa = rows.data.data() + idx[a] * rows.cols;
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const double* xb = rows.data.data() + idx[b] * rows.cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < rows.cols; ++c) {
        const double d = xa[c] - xb[c];
        acc += d * d;
      }
      dists.push_back(std::sqrt(acc));
    }
  }
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double median = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }

  BandwidthInfo local;
  local.median = median;
  if (!(median > 0.0)) {
    local.degenerate = true;
    local.median = 1.0;
  }
  if (info) *info = local;
  return local.median;
}

MmdResult mmd2(const Matrix& p, const Matrix& q, std::span<const double> bandwidths) {
  check_rows(p, q, "mmd2");
  if (bandwidths.empty()) fail("mmd2: need at least one bandwidth");
  for (double b : bandwidths)
    if (!(b > 0.0)) fail("mmd2: bandwidths must be positive");

  Vec inv(bandwidths.size());
  for (std::size_t k = 0; k < bandwidths.size(); ++k)
    inv[k] = 1.0 / (2.0 * bandwidths[k] * bandwidths[k]);

  const Vec np = row_sq_norms(p);
  const Vec nq = row_sq_norms(q);
  const double npp = static_cast<double>(p.rows) * static_cast<double>(p.rows);
  const double nqq = static_cast<double>(q.rows) * static_cast<double>(q.rows);
  const double npq = static_cast<double>(p.rows) * static_cast<double>(q.rows);

  const double s_pp = kernel_sum(p, p, np, np, inv);
  const double s_qq = kernel_sum(q, q, nq, nq, inv);
  const double s_pq = kernel_sum(p, q, np, nq, inv);

  MmdResult res;
  res.bandwidths.assign(bandwidths.begin(), bandwidths.end());
  res.value = s_pp / npp + s_qq / nqq - 2.0 * s_pq / npq;
  if (res.value < 0.0) {
    res.value = 0.0;
    res.clamped = true;
  }
  return res;
}

MmdResult mmd2(const Matrix& p, const Matrix& q, BandwidthInfo* info) {
  check_rows(p, q, "mmd2");
  Matrix joint(p.rows + q.rows, p.cols);
  std::copy(p.data.begin(), p.data.end(), joint.data.begin());
  std::copy(q.data.begin(), q.data.end(), joint.data.begin() + static_cast<std::ptrdiff_t>(p.data.size()));
  const double h = median_heuristic_bandwidth(joint, info);
  const double bw[3] = {0.5 * h, h, 2.0 * h};
  return mmd2(p, q, bw);
}

namespace {

// One stratified fold assignment: shuffle each class separately, deal
// round-robin across folds.
std::vector<std::uint32_t> fold_of(std::size_t n, std::size_t folds, Rng rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<std::uint32_t> fold(n);
  for (std::size_t i = 0; i < n; ++i)
    fold[idx[i]] = static_cast<std::uint32_t>(i % folds);
  return fold;
}

double bce_logit_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double c2st(const Matrix& p, const Matrix& q, std::uint64_t seed, const C2stConfig& cfg) {
  check_rows(p, q, "c2st");
  if (cfg.folds < 2) fail("c2st: need at least two folds");
  if (p.rows < cfg.folds || q.rows < cfg.folds) fail("c2st: too few rows for the fold count");

  const std::size_t dim = p.cols;
  const std::size_t n = p.rows + q.rows;

  // Joint standardization: one shared location/scale so the classifier sees
  // both sets in the same coordinates.
  Matrix all(n, dim);
  std::copy(p.data.begin(), p.data.end(), all.data.begin());
  std::copy(q.data.begin(), q.data.end(), all.data.begin() + static_cast<std::ptrdiff_t>(p.data.size()));
  Vec mean(dim, 0.0), sd(dim, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) mean[c] += all(r, c);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = all(r, c) - mean[c];
      sd[c] += d * d;
    }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) all(r, c) = (all(r, c) - mean[c]) / sd[c];

  std::vector<double> label(n, 0.0);
  for (std::size_t r = p.rows; r < n; ++r) label[r] = 1.0;

  const Rng base(mix_seed(seed, 0xC257));
  const auto fold_p = fold_of(p.rows, cfg.folds, base.derive(1));
  const auto fold_q = fold_of(q.rows, cfg.folds, base.derive(2));
  std::vector<std::uint32_t> fold(n);
  for (std::size_t r = 0; r < p.rows; ++r) fold[r] = fold_p[r];
  for (std::size_t r = 0; r < q.rows; ++r) fold[p.rows + r] = fold_q[r];

  std::vector<double> fold_acc(cfg.folds, 0.0);
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t r = 0; r < n; ++r) (fold[r] == f ? te : tr).push_back(r);

    const std::size_t width = cfg.width_factor * dim;
    nn::Network net = nn::network_init({dim, width, width, 1}, nn::Activation::Relu,
                                       nn::Head::Plain, mix_seed(base.seed(), 100 + f));
    auto opt = nn::adamw_init(net, cfg.lr);
    Rng epoch_rng = base.derive(200 + f);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      epoch_rng.shuffle(tr);
      for (std::size_t start = 0; start < tr.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(tr.size(), start + cfg.batch_size);
        const std::size_t bs = stop - start;
        Matrix bx(bs, dim);
        Vec by(bs);
        for (std::size_t k = 0; k < bs; ++k) {
          const std::size_t r = tr[start + k];
          std::copy_n(all.data.data() + r * dim, dim, bx.data.data() + k * dim);
          by[k] = label[r];
        }
        const auto cache = nn::forward(net, bx);
        Matrix adj(bs, 1);
        for (std::size_t k = 0; k < bs; ++k)
          adj(k, 0) = (bce_logit_sigmoid(cache.out()(k, 0)) - by[k]) / static_cast<double>(bs);
        auto back = nn::backward(net, cache, adj);
        nn::adamw_step(net, back.grads, opt);
      }
    }

    Matrix tx(te.size(), dim);
    for (std::size_t k = 0; k < te.size(); ++k)
      std::copy_n(all.data.data() + te[k] * dim, dim, tx.data.data() + k * dim);
    const auto cache = nn::forward(net, tx);
    std::size_t correct = 0;
    for (std::size_t k = 0; k < te.size(); ++k) {
      const bool predict_q = cache.out()(k, 0) > 0.0;
      if (predict_q == (label[te[k]] > 0.5)) ++correct;
    }
    fold_acc[f] = static_cast<double>(correct) / static_cast<double>(te.size());
  }

  double acc = 0.0;
  for (double a : fold_acc) acc += a;
  return acc / static_cast<double>(cfg.folds);
}

}  // namespace amortis::metrics
