#include <doctest.h>

#include <cmath>
#include <sstream>

#include "amortis/models.hpp"
#include "amortis/rng.hpp"

using namespace amortis;
using models::CpVae;
using models::CpVaeArch;
using models::UpVae;
using models::UpVaeArch;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  rng.fill_normal(m.data);
  return m;
}

void zero_network(nn::Network& net) {
  for (auto* buf : nn::parameter_buffers(net))
    for (auto& v : *buf) v = 0.0;
}

// Raw head value that the bounded variance activation maps to exactly 1.
double unit_variance_raw(const gauss::VarianceActivation& act) {
  const double q = (1.0 - act.alpha) / (act.omega - act.alpha);
  return std::log(q / (1.0 - q));
}

template <class Model, class Grads, class Loss>
double max_loss_fd_error(Model& m, std::vector<nn::Network*> nets, Grads& grads,
                         std::vector<nn::GradientSet*> gsets, Loss loss_value) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t n = 0; n < nets.size(); ++n) {
    auto params = nn::parameter_buffers(*nets[n]);
    auto gbufs = nn::gradient_buffers(*gsets[n]);
    REQUIRE(params.size() == gbufs.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      Vec& p = *params[k];
      const Vec& g = *gbufs[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = loss_value();
        p[i] = keep - h;
        const double dn = loss_value();
        p[i] = keep;
        worst = std::max(worst, rel_err(g[i], (up - dn) / (2 * h)));
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("model kind names round-trip") {
  CHECK(models::model_kind_name(models::ModelKind::CpVae) == std::string("cpvae"));
  CHECK(models::model_kind_name(models::ModelKind::UpVae) == std::string("upvae"));
  CHECK(models::model_kind_from_name("cpvae") == models::ModelKind::CpVae);
  CHECK(models::model_kind_from_name("upvae") == models::ModelKind::UpVae);
  CHECK_THROWS(models::model_kind_from_name("vae"));
}

TEST_CASE("conditional-prior loss gradients match finite differences") {
  CpVaeArch arch;
  arch.theta_dim = 2;
  arch.y_dim = 3;
  arch.latent_dim = 2;
  arch.encoder_hidden = {5};
  arch.prior_hidden = {4};
  arch.decoder_hidden = {6};
  auto m = models::build_cpvae(arch, 71);

  Rng rng(72);
  const Matrix theta = random_matrix(3, 2, rng);
  const Matrix y = random_matrix(3, 3, rng);
  const Matrix noise = random_matrix(3, 2, rng);

  models::CpVaeGrads grads;
  const auto stats = models::cpvae_loss(m, theta, y, noise, &grads);
  CHECK(stats.total == doctest::Approx(stats.kl + stats.theta_nll).epsilon(1e-12));
  CHECK(stats.recon_nll == 0.0);
  const auto again = models::cpvae_loss(m, theta, y, noise, nullptr);
  CHECK(again.total == stats.total);

  const double worst = max_loss_fd_error(
      m, {&m.encoder, &m.prior_net, &m.decoder}, grads,
      {&grads.encoder, &grads.prior_net, &grads.decoder},
      [&]() { return models::cpvae_loss(m, theta, y, noise, nullptr).total; });
  CHECK(worst < 1e-3);
}

TEST_CASE("unconditional-prior loss gradients match finite differences") {
  UpVaeArch arch;
  arch.theta_dim = 2;
  arch.y_dim = 3;
  arch.latent_dim = 2;
  arch.encoder_hidden = {5};
  arch.theta_decoder_hidden = {4};
  arch.data_decoder_hidden = {6};
  auto m = models::build_upvae(arch, 81);

  Rng rng(82);
  const Matrix theta = random_matrix(3, 2, rng);
  const Matrix y = random_matrix(3, 3, rng);
  const Matrix noise = random_matrix(3, 2, rng);

  models::UpVaeGrads grads;
  const auto stats = models::upvae_loss(m, theta, y, noise, &grads);
  CHECK(stats.total == doctest::Approx(0.4 * stats.kl + 0.4 * stats.theta_nll +
                                       0.2 * stats.recon_nll)
                           .epsilon(1e-12));

  const double worst = max_loss_fd_error(
      m, {&m.encoder, &m.theta_decoder, &m.data_decoder}, grads,
      {&grads.encoder, &grads.theta_decoder, &grads.data_decoder},
      [&]() { return models::upvae_loss(m, theta, y, noise, nullptr).total; });
  CHECK(worst < 1e-3);
}

TEST_CASE("conditional-prior loss vanishes on the pinned-truth configuration") {
  CpVaeArch arch;
  arch.theta_dim = 2;
  arch.y_dim = 2;
  arch.latent_dim = 3;
  arch.encoder_hidden = {4};
  arch.prior_hidden = {4};
  arch.decoder_hidden = {4};
  auto m = models::build_cpvae(arch, 5);
  // Encoder and prior both collapse to N(0, 1): zero weights give zero means
  // and raw variances, and the latent activation maps raw 0 to variance 1.
  zero_network(m.encoder);
  zero_network(m.prior_net);
  zero_network(m.decoder);
  const Vec target{0.7, -1.3};
  m.decoder.mean_head.b = target;
  const double raw1 = unit_variance_raw(m.out_act);
  m.decoder.var_head.b = {raw1, raw1};

  Matrix theta(4, 2);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c) theta(r, c) = target[c];
  Rng rng(6);
  const Matrix y = random_matrix(4, 2, rng);
  const Matrix noise = random_matrix(4, 3, rng);
  const auto stats = models::cpvae_loss(m, theta, y, noise, nullptr);
  CHECK(std::abs(stats.kl) < 1e-9);
  CHECK(std::abs(stats.theta_nll) < 1e-9);
  CHECK(std::abs(stats.total) < 1e-9);
}

TEST_CASE("conditional-prior latent term matches the closed-form divergence") {
  CpVaeArch arch;
  arch.theta_dim = 1;
  arch.y_dim = 1;
  arch.latent_dim = 2;
  arch.encoder_hidden = {3};
  arch.prior_hidden = {3};
  arch.decoder_hidden = {3};
  auto m = models::build_cpvae(arch, 15);
  zero_network(m.encoder);
  zero_network(m.prior_net);
  zero_network(m.decoder);
  // Biases give constant heads, so every row has the same q and p.
  m.encoder.mean_head.b = {0.4, -0.2};
  m.encoder.var_head.b = {0.5, -1.0};
  m.prior_net.mean_head.b = {-0.1, 0.3};
  m.prior_net.var_head.b = {0.0, 0.25};
  const double raw1 = unit_variance_raw(m.out_act);
  m.decoder.var_head.b = {raw1};

  const gauss::DiagGaussian q{{0.4, -0.2},
                              {gauss::explin(0.5), gauss::explin(-1.0)}};
  const gauss::DiagGaussian p{{-0.1, 0.3}, {gauss::explin(0.0), gauss::explin(0.25)}};
  const double expect_kl = gauss::kl_diag(q, p);

  Matrix theta(2, 1, 0.0);
  Matrix y(2, 1, 0.0);
  Rng rng(16);
  const Matrix noise = random_matrix(2, 2, rng);
  const auto stats = models::cpvae_loss(m, theta, y, noise, nullptr);
  CHECK(stats.kl == doctest::Approx(expect_kl).epsilon(1e-10));
}

TEST_CASE("unconditional-prior loss vanishes on the pinned-truth configuration") {
  UpVaeArch arch;
  arch.theta_dim = 2;
  arch.y_dim = 3;
  arch.latent_dim = 2;
  arch.encoder_hidden = {4};
  arch.theta_decoder_hidden = {4};
  arch.data_decoder_hidden = {4};
  auto m = models::build_upvae(arch, 7);
  zero_network(m.encoder);
  zero_network(m.theta_decoder);
  zero_network(m.data_decoder);
  const Vec t_target{0.7, -1.3};
  const Vec y_target{0.2, 0.0, -0.5};
  const double raw1 = unit_variance_raw(m.out_act);
  m.theta_decoder.mean_head.b = t_target;
  m.theta_decoder.var_head.b = {raw1, raw1};
  m.data_decoder.mean_head.b = y_target;
  m.data_decoder.var_head.b = {raw1, raw1, raw1};

  Matrix theta(4, 2), y(4, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 2; ++c) theta(r, c) = t_target[c];
    for (std::size_t c = 0; c < 3; ++c) y(r, c) = y_target[c];
  }
  Rng rng(8);
  const Matrix noise = random_matrix(4, 2, rng);
  const auto stats = models::upvae_loss(m, theta, y, noise, nullptr);
  CHECK(std::abs(stats.kl) < 1e-9);
  CHECK(std::abs(stats.theta_nll) < 1e-9);
  CHECK(std::abs(stats.recon_nll) < 1e-9);
  CHECK(std::abs(stats.total) < 1e-9);
}

TEST_CASE("unconditional-prior latent term is the standard-reference divergence") {
  UpVaeArch arch;
  arch.theta_dim = 1;
  arch.y_dim = 1;
  arch.latent_dim = 2;
  arch.encoder_hidden = {3};
  arch.theta_decoder_hidden = {3};
  arch.data_decoder_hidden = {3};
  auto m = models::build_upvae(arch, 9);
  zero_network(m.encoder);
  zero_network(m.theta_decoder);
  zero_network(m.data_decoder);
  m.encoder.mean_head.b = {3.0, 4.0};
  // Raw variance 0 -> variance 1, so the divergence is mean-only: 12.5.
  const double raw1 = unit_variance_raw(m.out_act);
  m.theta_decoder.var_head.b = {raw1};
  m.data_decoder.var_head.b = {raw1};

  Matrix theta(2, 1, 0.0), y(2, 1, 0.0);
  Rng rng(10);
  const Matrix noise = random_matrix(2, 2, rng);
  const auto stats = models::upvae_loss(m, theta, y, noise, nullptr);
  CHECK(stats.kl == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("sampling never evaluates the encoder") {
  CpVaeArch carch;
  carch.theta_dim = 2;
  carch.y_dim = 3;
  carch.latent_dim = 2;
  carch.encoder_hidden = {4};
  carch.prior_hidden = {4};
  carch.decoder_hidden = {4};
  auto cp = models::build_cpvae(carch, 21);
  for (auto* buf : nn::parameter_buffers(cp.encoder))
    for (auto& v : *buf) v = std::nan("");
  Rng rng(22);
  const Vec y0{0.1, -0.2, 0.3};
  const Matrix draws = models::cpvae_sample(cp, y0, 64, rng);
  CHECK(draws.rows == 64);
  CHECK(draws.cols == 2);
  CHECK(all_finite(draws));

  UpVaeArch uarch;
  uarch.theta_dim = 2;
  uarch.y_dim = 3;
  uarch.latent_dim = 2;
  uarch.encoder_hidden = {4};
  uarch.theta_decoder_hidden = {4};
  uarch.data_decoder_hidden = {4};
  auto up = models::build_upvae(uarch, 23);
  for (auto* buf : nn::parameter_buffers(up.encoder))
    for (auto& v : *buf) v = std::nan("");
  for (auto* buf : nn::parameter_buffers(up.data_decoder))
    for (auto& v : *buf) v = std::nan("");
  Rng rng2(24);
  const Matrix draws2 = models::upvae_sample(up, y0, 64, rng2);
  CHECK(draws2.rows == 64);
  CHECK(all_finite(draws2));
}

TEST_CASE("sampling is seeded and spread out") {
  CpVaeArch arch;
  arch.theta_dim = 2;
  arch.y_dim = 2;
  arch.latent_dim = 2;
  arch.encoder_hidden = {8};
  arch.prior_hidden = {8};
  arch.decoder_hidden = {8};
  const auto m = models::build_cpvae(arch, 31);
  const Vec y0{0.5, -0.5};
  Rng a(1), b(1), c(2);
  const Matrix d1 = models::cpvae_sample(m, y0, 32, a);
  const Matrix d2 = models::cpvae_sample(m, y0, 32, b);
  const Matrix d3 = models::cpvae_sample(m, y0, 32, c);
  CHECK(d1.data == d2.data);
  CHECK(d1.data != d3.data);
  // The bounded output variance keeps draws from collapsing to a point.
  double mn = d1(0, 0), mx = d1(0, 0);
  for (const double v : d1.data) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  CHECK(mx - mn > 1e-3);
}

TEST_CASE("default architectures build and evaluate on every task") {
  Rng rng(41);
  for (const auto task : sims::all_tasks()) {
    const auto carch = models::default_cpvae_arch(task);
    const auto t = sims::make_task(task);
    CHECK(carch.theta_dim == t.theta_dim);
    CHECK(carch.y_dim == t.y_dim);
    auto cp = models::build_cpvae(carch, 42);
    const Matrix theta = random_matrix(2, t.theta_dim, rng);
    const Matrix y = random_matrix(2, t.y_dim, rng);
    const Matrix noise = random_matrix(2, carch.latent_dim, rng);
    const auto cs = models::cpvae_loss(cp, theta, y, noise, nullptr);
    CHECK(std::isfinite(cs.total));

    const auto uarch = models::default_upvae_arch(task);
    CHECK(uarch.theta_dim == t.theta_dim);
    auto up = models::build_upvae(uarch, 43);
    const Matrix noise2 = random_matrix(2, uarch.latent_dim, rng);
    const auto us = models::upvae_loss(up, theta, y, noise2, nullptr);
    CHECK(std::isfinite(us.total));
  }
}

TEST_CASE("model serialization round-trips and reproduces samples") {
  UpVaeArch arch;
  arch.theta_dim = 2;
  arch.y_dim = 3;
  arch.latent_dim = 2;
  arch.encoder_hidden = {5};
  arch.theta_decoder_hidden = {5};
  arch.data_decoder_hidden = {5};
  const models::AnyModel m = models::build_upvae(arch, 51);

  std::ostringstream os1(std::ios::binary);
  models::save_model(m, os1);
  std::istringstream is(os1.str(), std::ios::binary);
  const models::AnyModel back = models::load_model(is);
  CHECK(models::model_kind(back) == models::ModelKind::UpVae);
  std::ostringstream os2(std::ios::binary);
  models::save_model(back, os2);
  CHECK(os1.str() == os2.str());

  const Vec y0{0.0, 0.1, 0.2};
  Rng r1(77), r2(77);
  const Matrix s1 = models::model_sample(m, y0, 16, r1);
  const Matrix s2 = models::model_sample(back, y0, 16, r2);
  CHECK(s1.data == s2.data);

  std::istringstream junk(std::string("XXXX????"), std::ios::binary);
  CHECK_THROWS(models::load_model(junk));
}

TEST_CASE("loss rejects mismatched shapes") {
  CpVaeArch arch;
  arch.theta_dim = 2;
  arch.y_dim = 2;
  arch.latent_dim = 2;
  arch.encoder_hidden = {3};
  arch.prior_hidden = {3};
  arch.decoder_hidden = {3};
  auto m = models::build_cpvae(arch, 61);
  Rng rng(62);
  const Matrix theta = random_matrix(4, 2, rng);
  const Matrix y = random_matrix(4, 2, rng);
  const Matrix bad_noise = random_matrix(4, 3, rng);
  CHECK_THROWS((void)models::cpvae_loss(m, theta, y, bad_noise, nullptr));
  const Matrix bad_y = random_matrix(3, 2, rng);
  CHECK_THROWS((void)models::cpvae_loss(m, theta, bad_y, bad_noise, nullptr));
}
