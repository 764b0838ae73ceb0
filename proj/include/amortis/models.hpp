#pragma once
// Amortized posterior estimators. Two VAE variants share the machinery:
//
//  * CpVae - the latent prior is itself conditioned on the observation: an
//    encoder q(z | y, theta), a prior network p(z | y), and a decoder
//    p(theta | y, z). Loss = KL(q || p_y) + theta reconstruction NLL.
//  * UpVae - the latent prior is fixed at N(0, I); alongside the theta
//    decoder a second decoder reconstructs y from z, and the three loss
//    terms are combined with fixed weights.
//
// All densities are diagonal Gaussians; latents are reparameterized, so both
// losses are differentiated exactly through the sampling step. Losses are
// batch means and omit constant k*log(2*pi) terms. Variances flow through
// the numbers in log space end to end.

#include <cstdint>
#include <iosfwd>
#include <variant>

#include "amortis/gauss.hpp"
#include "amortis/nn.hpp"
#include "amortis/rng.hpp"
#include "amortis/sims.hpp"

namespace amortis::models {

enum class ModelKind : std::uint32_t { CpVae = 0, UpVae = 1 };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct CpVae {
  std::size_t theta_dim = 0, y_dim = 0, latent_dim = 0;
  nn::Network encoder;    // [y, theta] -> latent mean / raw variance
  nn::Network prior_net;  // y -> latent mean / raw variance
  nn::Network decoder;    // [y, z] -> theta mean / raw variance
  gauss::VarianceActivation latent_act = gauss::VarianceActivation::exp_lin();
  gauss::VarianceActivation out_act = gauss::VarianceActivation::up_bounded();
};

struct UpVae {
  std::size_t theta_dim = 0, y_dim = 0, latent_dim = 0;
  nn::Network encoder;        // [y, theta] -> latent mean / raw variance
  nn::Network theta_decoder;  // [y, z] -> theta mean / raw variance
  nn::Network data_decoder;   // z -> y mean / raw variance
  gauss::VarianceActivation latent_act = gauss::VarianceActivation::exp_lin();
  gauss::VarianceActivation out_act = gauss::VarianceActivation::up_bounded();
  double w_kl = 0.4, w_theta = 0.4, w_recon = 0.2;
};

struct CpVaeArch {
  std::size_t theta_dim = 0, y_dim = 0, latent_dim = 0;
  std::vector<std::size_t> encoder_hidden, prior_hidden, decoder_hidden;
};

struct UpVaeArch {
  std::size_t theta_dim = 0, y_dim = 0, latent_dim = 0;
  std::vector<std::size_t> encoder_hidden, theta_decoder_hidden, data_decoder_hidden;
  double w_kl = 0.4, w_theta = 0.4, w_recon = 0.2;
};

// Benchmark-tuned architectures (hidden widths and latent size per task).
CpVaeArch default_cpvae_arch(sims::TaskId task);
UpVaeArch default_upvae_arch(sims::TaskId task);

CpVae build_cpvae(const CpVaeArch& arch, std::uint64_t seed);
UpVae build_upvae(const UpVaeArch& arch, std::uint64_t seed);

struct LossStats {
  double total = 0.0;
  double kl = 0.0;         // latent KL term (unweighted)
  double theta_nll = 0.0;  // theta reconstruction term (unweighted)
  double recon_nll = 0.0;  // y reconstruction term (UpVae only, unweighted)
};

struct CpVaeGrads {
  nn::GradientSet encoder, prior_net, decoder;
};
struct UpVaeGrads {
  nn::GradientSet encoder, theta_decoder, data_decoder;
};

// Batch loss over scaled (theta, y) rows. noise holds one standard-normal
// draw per latent coordinate (batch x latent_dim); passing it explicitly
// keeps gradient checks exact and training reproducible. When grads is
// non-null the exact parameter gradients of the mean loss are written there.
LossStats cpvae_loss(const CpVae& m, const Matrix& theta, const Matrix& y,
                     const Matrix& noise, CpVaeGrads* grads);
LossStats upvae_loss(const UpVae& m, const Matrix& theta, const Matrix& y,
                     const Matrix& noise, UpVaeGrads* grads);

// Posterior draws for one scaled observation; returns n x theta_dim in the
// scaled space (the caller owns unscaling). CpVae samples latents from the
// prior network at y0, UpVae from N(0, I); neither touches the encoder.
Matrix cpvae_sample(const CpVae& m, std::span<const double> y_scaled, std::size_t n, Rng& rng);
Matrix upvae_sample(const UpVae& m, std::span<const double> y_scaled, std::size_t n, Rng& rng);

using AnyModel = std::variant<CpVae, UpVae>;

ModelKind model_kind(const AnyModel& m);
Matrix model_sample(const AnyModel& m, std::span<const double> y_scaled, std::size_t n, Rng& rng);

// Self-contained binary blob (dims, activations, weights, networks).
void save_model(const AnyModel& m, std::ostream& os);
AnyModel load_model(std::istream& is);

}  // namespace amortis::models
