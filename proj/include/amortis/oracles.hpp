#pragma once
// Reference posteriors for benchmark tasks, used as ground truth when scoring
// the learned estimators:
//
//  * conjugate diagonal-Gaussian posterior (Gaussian prior + Gaussian noise),
//  * per-dimension truncated normal (uniform box prior + Gaussian noise),
//    sampled by inverse-CDF,
//  * dense 2-D grid posteriors (two-moons and the Gaussian mixture) with
//    alias-table sampling and within-cell jitter,
//  * rejection ABC with deterministic per-worker proposal streams.

#include <cstdint>

#include "amortis/common.hpp"
#include "amortis/gauss.hpp"
#include "amortis/rng.hpp"
#include "amortis/sims.hpp"

namespace amortis::oracles {

// Standard normal CDF (tail-accurate, via erfc).
double normal_cdf(double x);
// Inverse standard normal CDF for p in (0, 1); ~1e-15 accuracy incl. tails.
double normal_quantile(double p);

// Posterior of theta given y0 when theta ~ N(0, prior_var I) and
// y | theta ~ N(theta, lik_var I): diagonal Gaussian, per-dimension.
gauss::DiagGaussian conjugate_gaussian_posterior(std::span<const double> y0, double prior_var,
                                                 double lik_var);

Matrix sample_diag(const gauss::DiagGaussian& g, std::size_t n, Rng& rng);

// Posterior under a uniform prior on [lo, hi]^d and N(theta, lik_var I)
// noise: independent truncated normals, drawn exactly by inverse CDF. Every
// returned coordinate lies inside [lo, hi].
Matrix truncated_normal_posterior_sample(std::span<const double> y0, double lik_var, double lo,
                                         double hi, std::size_t n, Rng& rng);

// Normalized posterior over a regular 2-D grid of cell centers, with a
// prebuilt alias table for O(1) sampling.
struct GridPosterior {
  Vec axis0, axis1;      // cell centers per dimension
  double cell0 = 0.0, cell1 = 0.0;  // cell widths
  Vec weights;           // row-major (i0 * axis1.size() + i1), sums to 1
  Vec alias_prob;
  std::vector<std::uint32_t> alias_idx;
};

// Exact two-moons posterior on the prior box [-1, 1]^2: the likelihood of y0
// is recovered in the crescent's polar coordinates (radius Gaussian, angle
// uniform on a half-circle, 1/r area element).
GridPosterior two_moons_grid_posterior(std::span<const double> y0, std::size_t resolution = 512);

// Gaussian-mixture posterior on the prior box [-10, 10]^2.
GridPosterior gmm_grid_posterior(std::span<const double> y0, std::size_t resolution = 512);

// Alias-table draw of a cell, then uniform jitter within the cell.
Matrix grid_sample(const GridPosterior& grid, std::size_t n, Rng& rng);

struct AbcResult {
  Matrix samples;  // n_accept x theta_dim
  double acceptance_rate = 0.0;
  std::uint64_t proposals = 0;
};

// Draws from the prior until n_accept simulations land within epsilon
// (Euclidean) of y0. Worker w proposes from a stream keyed (seed, w) and owns
// a fixed share of the accepted count, so results do not depend on thread
// scheduling. Errors out if the acceptance rate drops below 1e-7 over a large
// trial budget (epsilon too small).
AbcResult rejection_abc(const sims::SimTask& task, std::span<const double> y0, double epsilon,
                        std::size_t n_accept, std::uint64_t seed);

}  // namespace amortis::oracles
