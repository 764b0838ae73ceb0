#include "amortis/gauss.hpp"

#include <cmath>

namespace amortis::gauss {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dims(const DiagGaussian& g, const char* who) {
  if (g.mean.size() != g.var.size() || g.mean.empty())
    fail(std::string(who) + ": mean/var dimension mismatch or empty");
  for (double v : g.var)
    if (!(v > 0.0)) fail(std::string(who) + ": variances must be positive");
}
}  // namespace

double log_density(std::span<const double> x, const DiagGaussian& g) {
  check_dims(g, "log_density");
  if (x.size() != g.mean.size()) fail("log_density: x dimension mismatch");
  double quad = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - g.mean[i];
    quad += d * d / g.var[i];
    logdet += std::log(g.var[i]);
  }
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + logdet + quad);
}

double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  check_dims(q, "kl_diag(q)");
  check_dims(p, "kl_diag(p)");
  if (q.mean.size() != p.mean.size()) fail("kl_diag: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double lq = std::log(q.var[i]);
    const double lp = std::log(p.var[i]);
    const double dm = p.mean[i] - q.mean[i];
    acc += lp - lq - 1.0 + std::exp(lq - lp) + dm * dm / p.var[i];
  }
  return 0.5 * acc;
}

double kl_vs_standard(const DiagGaussian& q) {
  check_dims(q, "kl_vs_standard");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i)
    acc += -std::log(q.var[i]) - 1.0 + q.var[i] + q.mean[i] * q.mean[i];
  return 0.5 * acc;
}

Vec reparam_sample(const DiagGaussian& g, std::span<const double> noise) {
  check_dims(g, "reparam_sample");
  if (noise.size() != g.mean.size()) fail("reparam_sample: noise dimension mismatch");
  Vec out(g.mean.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = g.mean[i] + std::sqrt(g.var[i]) * noise[i];
  return out;
}

double explin(double p) { return p <= 0.0 ? std::exp(p) : p + 1.0; }

double explin_grad(double p) { return p <= 0.0 ? std::exp(p) : 1.0; }

namespace {
double sigmoid(double p) {
  if (p >= 0.0) return 1.0 / (1.0 + std::exp(-p));
  const double e = std::exp(p);
  return e / (1.0 + e);
}
}  // namespace

double upbounded_sigmoid(double p, double alpha, double omega) {
  if (!(alpha > 0.0) || !(omega > alpha)) fail("upbounded_sigmoid: need 0 < alpha < omega");
  return alpha + (omega - alpha) * sigmoid(p);
}

double upbounded_sigmoid_grad(double p, double alpha, double omega) {
  if (!(alpha > 0.0) || !(omega > alpha)) fail("upbounded_sigmoid: need 0 < alpha < omega");
  const double s = sigmoid(p);
  return (omega - alpha) * s * (1.0 - s);
}

double VarianceActivation::apply(double p) const {
  return kind == Kind::ExpLin ? explin(p) : upbounded_sigmoid(p, alpha, omega);
}

double VarianceActivation::grad(double p) const {
  return kind == Kind::ExpLin ? explin_grad(p) : upbounded_sigmoid_grad(p, alpha, omega);
}

double VarianceActivation::log_apply(double p) const {
  if (kind == Kind::ExpLin) return p <= 0.0 ? p : std::log1p(p);
  return std::log(upbounded_sigmoid(p, alpha, omega));
}

double VarianceActivation::log_grad(double p) const {
  if (kind == Kind::ExpLin) return p <= 0.0 ? 1.0 : 1.0 / (1.0 + p);
  // d/dp log(v(p)) = v'(p) / v(p); v is bounded below by alpha > 0.
  return upbounded_sigmoid_grad(p, alpha, omega) / upbounded_sigmoid(p, alpha, omega);
}

}  // namespace amortis::gauss
