#pragma once
// Dense feed-forward substrate in plain double precision: Kaiming-initialized
// MLPs with an optional mean/variance output head, exact reverse-mode
// gradients, global-norm clipping, decoupled AdamW, and a byte-exact binary
// checkpoint format. No autodiff tape: each operation pairs a forward pass
// that caches activations with a hand-derived backward pass.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "amortis/common.hpp"

namespace amortis::nn {

enum class Activation : std::uint32_t { LeakyRelu = 0, Relu = 1, Identity = 2 };
enum class Head : std::uint32_t { Plain = 0, MeanVar = 1 };

struct DenseLayer {
  std::size_t out = 0, in = 0;
  Vec w;  // row-major, w[o * in + i]
  Vec b;  // size out
};

struct Network {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::LeakyRelu;
  double leaky_slope = 0.1;
  Head head = Head::Plain;
  std::vector<DenseLayer> layers;   // Plain: every layer; MeanVar: the trunk
  DenseLayer mean_head, var_head;   // populated iff head == MeanVar

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
};

// Kaiming-normal weights (std = sqrt(2 / fan_in)), zero biases. With the
// MeanVar head the last size is the width of both parallel output layers and
// the activation is applied after every trunk layer; with Plain the last
// layer's output is left linear.
Network network_init(const std::vector<std::size_t>& layer_sizes, Activation activation,
                     Head head, std::uint64_t seed, double leaky_slope = 0.1);

std::size_t parameter_count(const Network& net);

// Parameter/gradient buffers in a fixed order (trunk w,b pairs, then mean
// head w,b, then var head w,b). Shared by the optimizer, clipping, and tests.
std::vector<Vec*> parameter_buffers(Network& net);
std::vector<const Vec*> parameter_buffers(const Network& net);

struct GradientSet {
  std::vector<DenseLayer> layers;  // same shapes as Network::layers
  DenseLayer mean_head, var_head;
  Head head = Head::Plain;
};

GradientSet zeros_like(const Network& net);
std::vector<Vec*> gradient_buffers(GradientSet& g);
std::vector<const Vec*> gradient_buffers(const GradientSet& g);

// Activations cached by forward() for the matching backward() call.
struct ForwardCache {
  const Network* net = nullptr;  // backward() refuses a cache from another net
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation per layer in Network::layers
  std::vector<Matrix> post;  // post-activation per layer (last Plain layer: == pre)
  Matrix mean, raw_var;      // MeanVar head outputs
  std::size_t batch() const { return input.rows; }
  // Plain-head output (alias of the last linear layer's result).
  const Matrix& out() const { return post.back(); }
};

ForwardCache forward(const Network& net, const Matrix& input);

struct BackwardResult {
  GradientSet grads;
  Matrix input_adjoint;  // dLoss/dInput, batch x input_dim
};

// Plain head: out_adjoint is dLoss/dOutput.
BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Matrix& out_adjoint);
// MeanVar head: adjoints for the mean output and the raw (pre-activation)
// variance output.
BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Matrix& mean_adjoint, const Matrix& raw_var_adjoint);

struct ClipResult {
  double norm = 0.0;  // global L2 norm before clipping
  bool clipped = false;
};

// Rescales grads in place so the global L2 norm is at most max_norm.
// Non-finite gradients are an error.
ClipResult clip_global_norm(GradientSet& grads, double max_norm);
// Joint clip across several gradient sets (one model = several networks).
ClipResult clip_global_norm(std::span<GradientSet*> grads, double max_norm);

struct OptimizerState {
  double lr = 5e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-2;
  std::uint64_t step_count = 0;
  GradientSet m, v;  // first/second moment accumulators, parameter-shaped
};

OptimizerState adamw_init(const Network& net, double lr, double weight_decay = 1e-2,
                          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// One decoupled-AdamW update (bias-corrected moments; weight decay applied
// directly to parameters, not through the gradient). Errors if any parameter
// leaves the finite range.
void adamw_step(Network& net, const GradientSet& grads, OptimizerState& state);

// Binary checkpoint ("AMRT" magic + format version). Byte-exact round-trip.
void save_network(const Network& net, std::ostream& os);
Network load_network(std::istream& is);

}  // namespace amortis::nn
