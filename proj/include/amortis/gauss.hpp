#pragma once
// Diagonal-Gaussian toolbox: log-density, closed-form KL divergences, the
// reparameterization map, and the two variance activations used by the
// network heads (exp-linear and an upper-bounded sigmoid).

#include <span>

#include "amortis/common.hpp"

namespace amortis::gauss {

// Diagonal Gaussian with per-dimension mean and variance (not std deviation).
struct DiagGaussian {
  Vec mean;
  Vec var;
};

// log N(x; mean, diag(var)), including the k*log(2*pi) constant.
double log_density(std::span<const double> x, const DiagGaussian& g);

// KL( N(mq, diag(vq)) || N(mp, diag(vp)) ). Internally works with
// log-variances so the vq/vp ratio stays accurate for tiny variances.
double kl_diag(const DiagGaussian& q, const DiagGaussian& p);

// KL( q || N(0, I) ), the special case with the standard-normal reference.
double kl_vs_standard(const DiagGaussian& q);

// mean + sqrt(var) * noise, elementwise; noise holds standard-normal draws.
Vec reparam_sample(const DiagGaussian& g, std::span<const double> noise);

// Positive map used for latent variances: exp(p) for p <= 0, p + 1 above.
// C1-continuous at 0 and unbounded, so KL terms can match any target.
double explin(double p);
double explin_grad(double p);

// Positive bounded map used for decoder variances:
// alpha + (omega - alpha) * sigmoid(p), range (alpha, omega).
double upbounded_sigmoid(double p, double alpha, double omega);
double upbounded_sigmoid_grad(double p, double alpha, double omega);

// Tagged variance activation, so networks can carry their head transform.
struct VarianceActivation {
  enum class Kind { ExpLin, UpBoundedSigmoid };
  Kind kind = Kind::ExpLin;
  double alpha = 1e-4;  // UpBoundedSigmoid lower bound
  double omega = 4.0;   // UpBoundedSigmoid upper bound

  double apply(double p) const;
  double grad(double p) const;
  // log(apply(p)) and its derivative, computed without underflow so losses
  // can work in log-variance space throughout.
  double log_apply(double p) const;
  double log_grad(double p) const;

  static VarianceActivation exp_lin() { return {Kind::ExpLin, 0.0, 0.0}; }
  static VarianceActivation up_bounded(double alpha = 1e-4, double omega = 4.0) {
    return {Kind::UpBoundedSigmoid, alpha, omega};
  }
};

}  // namespace amortis::gauss
