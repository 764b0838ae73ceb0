#include "amortis/models.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace amortis::models {

namespace {

using gauss::VarianceActivation;
using nn::Activation;
using nn::Head;
using nn::Network;

std::vector<std::size_t> stack_sizes(std::size_t in, const std::vector<std::size_t>& hidden,
                                     std::size_t out) {
  std::vector<std::size_t> sizes;
  sizes.reserve(hidden.size() + 2);
  sizes.push_back(in);
  for (std::size_t h : hidden) sizes.push_back(h);
  sizes.push_back(out);
  return sizes;
}

Network meanvar_net(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                    std::uint64_t seed) {
  return nn::network_init(stack_sizes(in, hidden, out), Activation::LeakyRelu, Head::MeanVar,
                          seed);
}

void check_batch(const Matrix& theta, const Matrix& y, const Matrix& noise,
                 std::size_t theta_dim, std::size_t y_dim, std::size_t latent_dim) {
  if (theta.rows == 0) fail("vae loss: empty batch");
  if (theta.rows != y.rows || noise.rows != theta.rows)
    fail("vae loss: batch row counts differ");
  if (theta.cols != theta_dim || y.cols != y_dim || noise.cols != latent_dim)
    fail("vae loss: column dims do not match model");
}

void check_term(double v, const char* term) {
  if (!std::isfinite(v)) fail(std::string("vae loss: non-finite ") + term + " term");
}

// Per-coordinate Gaussian head read-out in log-variance space.
struct GaussOut {
  Matrix mean;     // batch x dim
  Matrix log_var;  // batch x dim
};

GaussOut head_logvar(const nn::ForwardCache& cache, const VarianceActivation& act) {
  GaussOut out;
  out.mean = cache.mean;
  out.log_var = Matrix(cache.raw_var.rows, cache.raw_var.cols);
  for (std::size_t k = 0; k < out.log_var.data.size(); ++k)
    out.log_var.data[k] = act.log_apply(cache.raw_var.data[k]);
  return out;
}

// raw_var adjoint from a log-variance adjoint.
Matrix raw_from_logvar_adjoint(const Matrix& d_logvar, const Matrix& raw,
                               const VarianceActivation& act) {
  Matrix out(d_logvar.rows, d_logvar.cols);
  for (std::size_t k = 0; k < out.data.size(); ++k)
    out.data[k] = d_logvar.data[k] * act.log_grad(raw.data[k]);
  return out;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  return kind == ModelKind::CpVae ? "cpvae" : "upvae";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "cpvae") return ModelKind::CpVae;
  if (name == "upvae") return ModelKind::UpVae;
  fail("unknown model kind: " + name);
}

CpVaeArch default_cpvae_arch(sims::TaskId task) {
  using sims::TaskId;
  CpVaeArch a;
  const sims::SimTask t = make_task(task);
  a.theta_dim = t.theta_dim;
  a.y_dim = t.y_dim;
  switch (task) {
    case TaskId::TwoMoons:
      a.latent_dim = 2;
      a.encoder_hidden = {128, 128, 128};
      a.prior_hidden = {128, 128};
      a.decoder_hidden = {128, 128, 128};
      break;
    case TaskId::GaussianLinear:
      a.latent_dim = 5;
      a.encoder_hidden = {64, 64, 64};
      a.prior_hidden = {64, 64};
      a.decoder_hidden = {64, 64, 64};
      break;
    case TaskId::GaussianLinearUniform:
      a.latent_dim = 10;
      a.encoder_hidden = {64, 64, 64};
      a.prior_hidden = {64, 64};
      a.decoder_hidden = {64, 64, 64};
      break;
    case TaskId::GaussianMixture:
      a.latent_dim = 2;
      a.encoder_hidden = {64, 64, 64};
      a.prior_hidden = {64, 64};
      a.decoder_hidden = {64, 64, 64};
      break;
    case TaskId::BernoulliGlm:
      a.latent_dim = 10;
      a.encoder_hidden = {128, 128, 128};
      a.prior_hidden = {128, 128};
      a.decoder_hidden = {128, 128, 128};
      break;
    case TaskId::BernoulliGlmRaw:
      a.latent_dim = 5;
      a.encoder_hidden = {256, 256, 256, 256};
      a.prior_hidden = {128, 128};
      a.decoder_hidden = {256, 256, 256, 256};
      break;
    case TaskId::Sir:
      a.latent_dim = 2;
      a.encoder_hidden = {100, 100};
      a.prior_hidden = {100, 100};
      a.decoder_hidden = {100, 100, 100};
      break;
    case TaskId::LotkaVolterra:
      a.latent_dim = 8;
      a.encoder_hidden = {128, 128, 128, 128};
      a.prior_hidden = {64, 64};
      a.decoder_hidden = {128, 128, 128, 128};
      break;
  }
  return a;
}

UpVaeArch default_upvae_arch(sims::TaskId task) {
  using sims::TaskId;
  UpVaeArch a;
  const sims::SimTask t = make_task(task);
  a.theta_dim = t.theta_dim;
  a.y_dim = t.y_dim;
  switch (task) {
    case TaskId::TwoMoons:
      a.latent_dim = 2;
      a.encoder_hidden = {256, 128, 64};
      a.theta_decoder_hidden = {256, 128, 64};
      a.data_decoder_hidden = {256, 128, 64};
      break;
    case TaskId::GaussianLinear:
      a.latent_dim = 5;
      a.encoder_hidden = {64, 64, 64};
      a.theta_decoder_hidden = {64, 64, 64};
      a.data_decoder_hidden = {64, 64, 64};
      break;
    case TaskId::GaussianLinearUniform:
      a.latent_dim = 10;
      a.encoder_hidden = {64, 64, 64};
      a.theta_decoder_hidden = {64, 64, 64};
      a.data_decoder_hidden = {64, 64, 64};
      break;
    case TaskId::GaussianMixture:
      a.latent_dim = 2;
      a.encoder_hidden = {64, 64, 64};
      a.theta_decoder_hidden = {64, 64, 64};
      a.data_decoder_hidden = {64, 64, 64};
      break;
    case TaskId::BernoulliGlm:
      a.latent_dim = 10;
      a.encoder_hidden = {128, 128, 128};
      a.theta_decoder_hidden = {128, 128, 128};
      a.data_decoder_hidden = {128, 128, 128};
      break;
    case TaskId::BernoulliGlmRaw:
      a.latent_dim = 5;
      a.encoder_hidden = {128, 128, 128, 128};
      a.theta_decoder_hidden = {128, 128, 128, 128};
      a.data_decoder_hidden = {128, 128, 128, 128};
      break;
    case TaskId::Sir:
      a.latent_dim = 2;
      a.encoder_hidden = {100, 100, 100};
      a.theta_decoder_hidden = {100, 100, 100};
      a.data_decoder_hidden = {100, 100, 100};
      break;
    case TaskId::LotkaVolterra:
      a.latent_dim = 8;
      a.encoder_hidden = {128, 128, 128, 128};
      a.theta_decoder_hidden = {128, 128, 128};
      a.data_decoder_hidden = {128, 128, 128};
      break;
  }
  return a;
}

CpVae build_cpvae(const CpVaeArch& arch, std::uint64_t seed) {
  if (arch.theta_dim == 0 || arch.y_dim == 0 || arch.latent_dim == 0)
    fail("build_cpvae: zero dimension");
  CpVae m;
  m.theta_dim = arch.theta_dim;
  m.y_dim = arch.y_dim;
  m.latent_dim = arch.latent_dim;
  m.encoder = meanvar_net(arch.y_dim + arch.theta_dim, arch.encoder_hidden, arch.latent_dim,
                          mix_seed(seed, 1));
  m.prior_net = meanvar_net(arch.y_dim, arch.prior_hidden, arch.latent_dim, mix_seed(seed, 2));
  m.decoder = meanvar_net(arch.y_dim + arch.latent_dim, arch.decoder_hidden, arch.theta_dim,
                          mix_seed(seed, 3));
  return m;
}

UpVae build_upvae(const UpVaeArch& arch, std::uint64_t seed) {
  if (arch.theta_dim == 0 || arch.y_dim == 0 || arch.latent_dim == 0)
    fail("build_upvae: zero dimension");
  const double wsum = arch.w_kl + arch.w_theta + arch.w_recon;
  if (!(arch.w_kl > 0.0) || !(arch.w_theta > 0.0) || !(arch.w_recon > 0.0) ||
      std::abs(wsum - 1.0) > 1e-12)
    fail("build_upvae: loss weights must be positive and sum to 1");
  UpVae m;
  m.theta_dim = arch.theta_dim;
  m.y_dim = arch.y_dim;
  m.latent_dim = arch.latent_dim;
  m.w_kl = arch.w_kl;
  m.w_theta = arch.w_theta;
  m.w_recon = arch.w_recon;
  m.encoder = meanvar_net(arch.y_dim + arch.theta_dim, arch.encoder_hidden, arch.latent_dim,
                          mix_seed(seed, 1));
  m.theta_decoder = meanvar_net(arch.y_dim + arch.latent_dim, arch.theta_decoder_hidden,
                                arch.theta_dim, mix_seed(seed, 2));
  m.data_decoder = meanvar_net(arch.latent_dim, arch.data_decoder_hidden, arch.y_dim,
                               mix_seed(seed, 3));
  return m;
}

LossStats cpvae_loss(const CpVae& m, const Matrix& theta, const Matrix& y, const Matrix& noise,
                     CpVaeGrads* grads) {
  check_batch(theta, y, noise, m.theta_dim, m.y_dim, m.latent_dim);
  const std::size_t n = theta.rows;
  const std::size_t kz = m.latent_dim;

  const Matrix enc_in = hconcat(y, theta);
  const auto enc_cache = nn::forward(m.encoder, enc_in);
  const auto pri_cache = nn::forward(m.prior_net, y);
  const GaussOut q = head_logvar(enc_cache, m.latent_act);
  const GaussOut p = head_logvar(pri_cache, m.latent_act);

  // KL( q(z|y,theta) || p(z|y) ), summed over latent dims, averaged over rows.
  double kl_sum = 0.0;
  for (std::size_t k = 0; k < n * kz; ++k) {
    const double dl = q.log_var.data[k] - p.log_var.data[k];
    const double dm = p.mean.data[k] - q.mean.data[k];
    kl_sum += 0.5 * (-dl - 1.0 + std::exp(dl) + dm * dm * std::exp(-p.log_var.data[k]));
  }
  check_term(kl_sum, "KL");

  // Reparameterized latent and decoder read-out.
  Matrix z(n, kz);
  for (std::size_t k = 0; k < n * kz; ++k)
    z.data[k] = q.mean.data[k] + std::exp(0.5 * q.log_var.data[k]) * noise.data[k];
  const Matrix dec_in = hconcat(y, z);
  const auto dec_cache = nn::forward(m.decoder, dec_in);
  const GaussOut t = head_logvar(dec_cache, m.out_act);

  // Gaussian NLL of theta under the decoder, constants dropped.
  double nll_sum = 0.0;
  for (std::size_t k = 0; k < n * m.theta_dim; ++k) {
    const double d = theta.data[k] - t.mean.data[k];
    nll_sum += 0.5 * t.log_var.data[k] + 0.5 * d * d * std::exp(-t.log_var.data[k]);
  }
  check_term(nll_sum, "reconstruction");

  LossStats stats;
  stats.kl = kl_sum / static_cast<double>(n);
  stats.theta_nll = nll_sum / static_cast<double>(n);
  stats.total = stats.kl + stats.theta_nll;

  if (!grads) return stats;
  const double s = 1.0 / static_cast<double>(n);

  // Decoder head adjoints.
  Matrix d_mean_t(n, m.theta_dim), d_logvar_t(n, m.theta_dim);
  for (std::size_t k = 0; k < n * m.theta_dim; ++k) {
    const double inv_v = std::exp(-t.log_var.data[k]);
    const double d = t.mean.data[k] - theta.data[k];
    d_mean_t.data[k] = s * d * inv_v;
    d_logvar_t.data[k] = s * 0.5 * (1.0 - d * d * inv_v);
  }
  auto dec_back = nn::backward(m.decoder, dec_cache, d_mean_t,
                               raw_from_logvar_adjoint(d_logvar_t, dec_cache.raw_var, m.out_act));

  // The decoder input is [y, z]; the z block carries gradient back through
  // the reparameterization into the encoder head.
  Matrix d_mean_q(n, kz), d_logvar_q(n, kz), d_mean_p(n, kz), d_logvar_p(n, kz);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dz = dec_back.input_adjoint.data.data() + r * (m.y_dim + kz) + m.y_dim;
    for (std::size_t i = 0; i < kz; ++i) {
      const std::size_t k = r * kz + i;
      const double dl = q.log_var.data[k] - p.log_var.data[k];
      const double ratio = std::exp(dl);
      const double inv_vp = std::exp(-p.log_var.data[k]);
      const double dm = q.mean.data[k] - p.mean.data[k];
      const double sigma_q = std::exp(0.5 * q.log_var.data[k]);
      d_mean_q.data[k] = s * dm * inv_vp + dz[i];
      d_logvar_q.data[k] = s * 0.5 * (ratio - 1.0) + dz[i] * 0.5 * sigma_q * noise.data[k];
      d_mean_p.data[k] = -s * dm * inv_vp;
      d_logvar_p.data[k] = s * 0.5 * (1.0 - ratio - dm * dm * inv_vp);
    }
  }
  auto enc_back = nn::backward(m.encoder, enc_cache, d_mean_q,
                               raw_from_logvar_adjoint(d_logvar_q, enc_cache.raw_var, m.latent_act));
  auto pri_back = nn::backward(m.prior_net, pri_cache, d_mean_p,
                               raw_from_logvar_adjoint(d_logvar_p, pri_cache.raw_var, m.latent_act));

  grads->encoder = std::move(enc_back.grads);
  grads->prior_net = std::move(pri_back.grads);
  grads->decoder = std::move(dec_back.grads);
  return stats;
}

LossStats upvae_loss(const UpVae& m, const Matrix& theta, const Matrix& y, const Matrix& noise,
                     UpVaeGrads* grads) {
  check_batch(theta, y, noise, m.theta_dim, m.y_dim, m.latent_dim);
  const std::size_t n = theta.rows;
  const std::size_t kz = m.latent_dim;

  const Matrix enc_in = hconcat(y, theta);
  const auto enc_cache = nn::forward(m.encoder, enc_in);
  const GaussOut q = head_logvar(enc_cache, m.latent_act);

  // KL( q(z|y,theta) || N(0, I) ).
  double kl_sum = 0.0;
  for (std::size_t k = 0; k < n * kz; ++k)
    kl_sum += 0.5 * (-q.log_var.data[k] - 1.0 + std::exp(q.log_var.data[k]) +
                     q.mean.data[k] * q.mean.data[k]);
  check_term(kl_sum, "KL");

  Matrix z(n, kz);
  for (std::size_t k = 0; k < n * kz; ++k)
    z.data[k] = q.mean.data[k] + std::exp(0.5 * q.log_var.data[k]) * noise.data[k];

  const Matrix tdec_in = hconcat(y, z);
  const auto tdec_cache = nn::forward(m.theta_decoder, tdec_in);
  const GaussOut t = head_logvar(tdec_cache, m.out_act);
  double tnll_sum = 0.0;
  for (std::size_t k = 0; k < n * m.theta_dim; ++k) {
    const double d = theta.data[k] - t.mean.data[k];
    tnll_sum += 0.5 * t.log_var.data[k] + 0.5 * d * d * std::exp(-t.log_var.data[k]);
  }
  check_term(tnll_sum, "theta reconstruction");

  const auto ddec_cache = nn::forward(m.data_decoder, z);
  const GaussOut w = head_logvar(ddec_cache, m.out_act);
  double rnll_sum = 0.0;
  for (std::size_t k = 0; k < n * m.y_dim; ++k) {
    const double d = y.data[k] - w.mean.data[k];
    rnll_sum += 0.5 * w.log_var.data[k] + 0.5 * d * d * std::exp(-w.log_var.data[k]);
  }
  check_term(rnll_sum, "data reconstruction");

  LossStats stats;
  stats.kl = kl_sum / static_cast<double>(n);
  stats.theta_nll = tnll_sum / static_cast<double>(n);
  stats.recon_nll = rnll_sum / static_cast<double>(n);
  stats.total = m.w_kl * stats.kl + m.w_theta * stats.theta_nll + m.w_recon * stats.recon_nll;

  if (!grads) return stats;
  const double st = m.w_theta / static_cast<double>(n);
  const double sy = m.w_recon / static_cast<double>(n);
  const double sk = m.w_kl / static_cast<double>(n);

  Matrix d_mean_t(n, m.theta_dim), d_logvar_t(n, m.theta_dim);
  for (std::size_t k = 0; k < n * m.theta_dim; ++k) {
    const double inv_v = std::exp(-t.log_var.data[k]);
    const double d = t.mean.data[k] - theta.data[k];
    d_mean_t.data[k] = st * d * inv_v;
    d_logvar_t.data[k] = st * 0.5 * (1.0 - d * d * inv_v);
  }
  auto tdec_back = nn::backward(m.theta_decoder, tdec_cache, d_mean_t,
                                raw_from_logvar_adjoint(d_logvar_t, tdec_cache.raw_var, m.out_act));

  Matrix d_mean_w(n, m.y_dim), d_logvar_w(n, m.y_dim);
  for (std::size_t k = 0; k < n * m.y_dim; ++k) {
    const double inv_v = std::exp(-w.log_var.data[k]);
    const double d = w.mean.data[k] - y.data[k];
    d_mean_w.data[k] = sy * d * inv_v;
    d_logvar_w.data[k] = sy * 0.5 * (1.0 - d * d * inv_v);
  }
  auto ddec_back = nn::backward(m.data_decoder, ddec_cache, d_mean_w,
                                raw_from_logvar_adjoint(d_logvar_w, ddec_cache.raw_var, m.out_act));

  // Latent adjoint: theta decoder sees [y, z], data decoder sees z directly.
  Matrix d_mean_q(n, kz), d_logvar_q(n, kz);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dz1 = tdec_back.input_adjoint.data.data() + r * (m.y_dim + kz) + m.y_dim;
    const double* dz2 = ddec_back.input_adjoint.data.data() + r * kz;
    for (std::size_t i = 0; i < kz; ++i) {
      const std::size_t k = r * kz + i;
      const double dz = dz1[i] + dz2[i];
      const double sigma_q = std::exp(0.5 * q.log_var.data[k]);
      d_mean_q.data[k] = sk * q.mean.data[k] + dz;
      d_logvar_q.data[k] =
          sk * 0.5 * (std::exp(q.log_var.data[k]) - 1.0) + dz * 0.5 * sigma_q * noise.data[k];
    }
  }
  auto enc_back = nn::backward(m.encoder, enc_cache, d_mean_q,
                               raw_from_logvar_adjoint(d_logvar_q, enc_cache.raw_var, m.latent_act));

  grads->encoder = std::move(enc_back.grads);
  grads->theta_decoder = std::move(tdec_back.grads);
  grads->data_decoder = std::move(ddec_back.grads);
  return stats;
}

namespace {
// Decodes a batch of latents against one repeated observation row and draws
// theta from the per-row Gaussian read-out.
Matrix decode_thetas(const Network& decoder, const VarianceActivation& out_act,
                     std::span<const double> y_scaled, const Matrix& z, std::size_t theta_dim,
                     Rng& rng, bool prepend_y) {
  Matrix input;
  if (prepend_y) {
    Matrix yrep(z.rows, y_scaled.size());
    for (std::size_t r = 0; r < z.rows; ++r)
      for (std::size_t c = 0; c < y_scaled.size(); ++c) yrep(r, c) = y_scaled[c];
    input = hconcat(yrep, z);
  } else {
    input = z;
  }
  const auto cache = nn::forward(decoder, input);
  Matrix out(z.rows, theta_dim);
  for (std::size_t r = 0; r < z.rows; ++r)
    for (std::size_t c = 0; c < theta_dim; ++c) {
      const double sd = std::exp(0.5 * out_act.log_apply(cache.raw_var(r, c)));
      out(r, c) = cache.mean(r, c) + sd * rng.normal();
    }
  return out;
}
}  // namespace

Matrix cpvae_sample(const CpVae& m, std::span<const double> y_scaled, std::size_t n, Rng& rng) {
  if (y_scaled.size() != m.y_dim) fail("cpvae_sample: observation dim mismatch");
  if (n == 0) fail("cpvae_sample: need n > 0");
  Matrix y_row(1, m.y_dim);
  for (std::size_t c = 0; c < m.y_dim; ++c) y_row(0, c) = y_scaled[c];
  const auto pri_cache = nn::forward(m.prior_net, y_row);

  Vec mu(m.latent_dim), sd(m.latent_dim);
  for (std::size_t i = 0; i < m.latent_dim; ++i) {
    mu[i] = pri_cache.mean(0, i);
    sd[i] = std::exp(0.5 * m.latent_act.log_apply(pri_cache.raw_var(0, i)));
  }
  Matrix z(n, m.latent_dim);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < m.latent_dim; ++i) z(r, i) = mu[i] + sd[i] * rng.normal();

  return decode_thetas(m.decoder, m.out_act, y_scaled, z, m.theta_dim, rng, true);
}

Matrix upvae_sample(const UpVae& m, std::span<const double> y_scaled, std::size_t n, Rng& rng) {
  if (y_scaled.size() != m.y_dim) fail("upvae_sample: observation dim mismatch");
  if (n == 0) fail("upvae_sample: need n > 0");
  Matrix z(n, m.latent_dim);
  for (double& v : z.data) v = rng.normal();
  return decode_thetas(m.theta_decoder, m.out_act, y_scaled, z, m.theta_dim, rng, true);
}

ModelKind model_kind(const AnyModel& m) {
  return std::holds_alternative<CpVae>(m) ? ModelKind::CpVae : ModelKind::UpVae;
}

Matrix model_sample(const AnyModel& m, std::span<const double> y_scaled, std::size_t n,
                    Rng& rng) {
  if (const auto* cp = std::get_if<CpVae>(&m)) return cpvae_sample(*cp, y_scaled, n, rng);
  return upvae_sample(std::get<UpVae>(m), y_scaled, n, rng);
}

// --- serialization ----------------------------------------------------------

namespace {
constexpr char kModelMagic[4] = {'A', 'M', 'D', 'L'};
constexpr std::uint32_t kModelVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) fail("load_model: truncated stream");
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) fail("load_model: truncated stream");
  return v;
}

void write_act(std::ostream& os, const VarianceActivation& a) {
  write_u32(os, static_cast<std::uint32_t>(a.kind));
  write_f64(os, a.alpha);
  write_f64(os, a.omega);
}
VarianceActivation read_act(std::istream& is) {
  VarianceActivation a;
  const std::uint32_t kind = read_u32(is);
  if (kind > 1) fail("load_model: corrupt activation tag");
  a.kind = static_cast<VarianceActivation::Kind>(kind);
  a.alpha = read_f64(is);
  a.omega = read_f64(is);
  return a;
}
}  // namespace

void save_model(const AnyModel& m, std::ostream& os) {
  os.write(kModelMagic, 4);
  write_u32(os, kModelVersion);
  write_u32(os, static_cast<std::uint32_t>(model_kind(m)));
  if (const auto* cp = std::get_if<CpVae>(&m)) {
    write_u32(os, static_cast<std::uint32_t>(cp->theta_dim));
    write_u32(os, static_cast<std::uint32_t>(cp->y_dim));
    write_u32(os, static_cast<std::uint32_t>(cp->latent_dim));
    write_act(os, cp->latent_act);
    write_act(os, cp->out_act);
    nn::save_network(cp->encoder, os);
    nn::save_network(cp->prior_net, os);
    nn::save_network(cp->decoder, os);
  } else {
    const auto& up = std::get<UpVae>(m);
    write_u32(os, static_cast<std::uint32_t>(up.theta_dim));
    write_u32(os, static_cast<std::uint32_t>(up.y_dim));
    write_u32(os, static_cast<std::uint32_t>(up.latent_dim));
    write_act(os, up.latent_act);
    write_act(os, up.out_act);
    write_f64(os, up.w_kl);
    write_f64(os, up.w_theta);
    write_f64(os, up.w_recon);
    nn::save_network(up.encoder, os);
    nn::save_network(up.theta_decoder, os);
    nn::save_network(up.data_decoder, os);
  }
  if (!os) fail("save_model: write failed");
}

AnyModel load_model(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kModelMagic, 4) != 0) fail("load_model: bad magic");
  if (read_u32(is) != kModelVersion) fail("load_model: unsupported format version");
  const std::uint32_t kind = read_u32(is);
  if (kind > 1) fail("load_model: corrupt model kind");
  if (kind == 0) {
    CpVae m;
    m.theta_dim = read_u32(is);
    m.y_dim = read_u32(is);
    m.latent_dim = read_u32(is);
    m.latent_act = read_act(is);
    m.out_act = read_act(is);
    m.encoder = nn::load_network(is);
    m.prior_net = nn::load_network(is);
    m.decoder = nn::load_network(is);
    if (m.encoder.input_dim() != m.y_dim + m.theta_dim ||
        m.prior_net.input_dim() != m.y_dim ||
        m.decoder.input_dim() != m.y_dim + m.latent_dim ||
        m.decoder.output_dim() != m.theta_dim)
      fail("load_model: network dims inconsistent");
    return m;
  }
  UpVae m;
  m.theta_dim = read_u32(is);
  m.y_dim = read_u32(is);
  m.latent_dim = read_u32(is);
  m.latent_act = read_act(is);
  m.out_act = read_act(is);
  m.w_kl = read_f64(is);
  m.w_theta = read_f64(is);
  m.w_recon = read_f64(is);
  m.encoder = nn::load_network(is);
  m.theta_decoder = nn::load_network(is);
  m.data_decoder = nn::load_network(is);
  if (m.encoder.input_dim() != m.y_dim + m.theta_dim ||
      m.theta_decoder.input_dim() != m.y_dim + m.latent_dim ||
      m.data_decoder.input_dim() != m.latent_dim ||
      m.theta_decoder.output_dim() != m.theta_dim ||
      m.data_decoder.output_dim() != m.y_dim)
    fail("load_model: network dims inconsistent");
  return m;
}

}  // namespace amortis::models
