#include "amortis/nn.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "amortis/rng.hpp"

namespace amortis::nn {

namespace {

double act_apply(Activation a, double slope, double z) {
  switch (a) {
    case Activation::LeakyRelu: return z > 0.0 ? z : slope * z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
  }
  fail("unknown activation");
}

double act_grad(Activation a, double slope, double z) {
  switch (a) {
    case Activation::LeakyRelu: return z > 0.0 ? 1.0 : slope;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  fail("unknown activation");
}

Matrix linear_forward(const Matrix& x, const DenseLayer& l) {
  if (x.cols != l.in) fail("linear_forward: input width mismatch");
  Matrix out(x.rows, l.out);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.data.data() + r * l.in;
    double* yr = out.data.data() + r * l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* wo = l.w.data() + o * l.in;
      double acc = l.b[o];
      for (std::size_t i = 0; i < l.in; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
  return out;
}

// Accumulates dW/db from gz (batch x out) and the layer input x, and writes
// the adjoint with respect to x.
void linear_backward(const Matrix& x, const DenseLayer& l, const Matrix& gz,
                     DenseLayer& grad, Matrix& gx) {
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.data.data() + r * l.in;
    const double* gr = gz.data.data() + r * l.out;
    double* gxr = gx.data.data() + r * l.in;
    for (std::size_t o = 0; o < l.out; ++o) {
      const double a = gr[o];
      grad.b[o] += a;
      double* wg = grad.w.data() + o * l.in;
      const double* wo = l.w.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) {
        wg[i] += a * xr[i];
        gxr[i] += a * wo[i];
      }
    }
  }
}

DenseLayer make_layer(std::size_t out, std::size_t in, Rng& rng) {
  DenseLayer l;
  l.out = out;
  l.in = in;
  l.w.resize(out * in);
  l.b.assign(out, 0.0);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
  for (double& w : l.w) w = rng.normal(0.0, std_dev);
  return l;
}

DenseLayer layer_zeros(std::size_t out, std::size_t in) {
  DenseLayer l;
  l.out = out;
  l.in = in;
  l.w.assign(out * in, 0.0);
  l.b.assign(out, 0.0);
  return l;
}

std::size_t trunk_count(const Network& net) {
  return net.head == Head::Plain ? net.layer_sizes.size() - 1 : net.layer_sizes.size() - 2;
}

}  // namespace

Network network_init(const std::vector<std::size_t>& layer_sizes, Activation activation,
                     Head head, std::uint64_t seed, double leaky_slope) {
  if (layer_sizes.size() < 2) fail("network_init: need at least input and output sizes");
  for (std::size_t s : layer_sizes)
    if (s == 0) fail("network_init: zero layer size");
  if (leaky_slope < 0.0) fail("network_init: negative leaky slope");

  Network net;
  net.layer_sizes = layer_sizes;
  net.activation = activation;
  net.leaky_slope = leaky_slope;
  net.head = head;

  Rng rng(seed);
  const std::size_t trunk = head == Head::Plain ? layer_sizes.size() - 1 : layer_sizes.size() - 2;
  net.layers.reserve(trunk);
  for (std::size_t l = 0; l < trunk; ++l)
    net.layers.push_back(make_layer(layer_sizes[l + 1], layer_sizes[l], rng));
  if (head == Head::MeanVar) {
    const std::size_t width = layer_sizes[layer_sizes.size() - 2];
    const std::size_t out = layer_sizes.back();
    net.mean_head = make_layer(out, width, rng);
    net.var_head = make_layer(out, width, rng);
  }
  return net;
}

std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const auto* buf : parameter_buffers(const_cast<Network&>(net))) n += buf->size();
  return n;
}

std::vector<Vec*> parameter_buffers(Network& net) {
  std::vector<Vec*> out;
  for (auto& l : net.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  if (net.head == Head::MeanVar) {
    out.push_back(&net.mean_head.w);
    out.push_back(&net.mean_head.b);
    out.push_back(&net.var_head.w);
    out.push_back(&net.var_head.b);
  }
  return out;
}

std::vector<const Vec*> parameter_buffers(const Network& net) {
  auto bufs = parameter_buffers(const_cast<Network&>(net));
  return {bufs.begin(), bufs.end()};
}

GradientSet zeros_like(const Network& net) {
  GradientSet g;
  g.head = net.head;
  g.layers.reserve(net.layers.size());
  for (const auto& l : net.layers) g.layers.push_back(layer_zeros(l.out, l.in));
  if (net.head == Head::MeanVar) {
    g.mean_head = layer_zeros(net.mean_head.out, net.mean_head.in);
    g.var_head = layer_zeros(net.var_head.out, net.var_head.in);
  }
  return g;
}

std::vector<Vec*> gradient_buffers(GradientSet& g) {
  std::vector<Vec*> out;
  for (auto& l : g.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  if (g.head == Head::MeanVar) {
    out.push_back(&g.mean_head.w);
    out.push_back(&g.mean_head.b);
    out.push_back(&g.var_head.w);
    out.push_back(&g.var_head.b);
  }
  return out;
}

std::vector<const Vec*> gradient_buffers(const GradientSet& g) {
  auto bufs = gradient_buffers(const_cast<GradientSet&>(g));
  return {bufs.begin(), bufs.end()};
}

ForwardCache forward(const Network& net, const Matrix& input) {
  if (input.cols != net.input_dim()) fail("forward: input width mismatch");
  if (input.rows == 0) fail("forward: empty batch");

  ForwardCache cache;
  cache.net = &net;
  cache.input = input;
  const std::size_t trunk = trunk_count(net);
  cache.pre.reserve(trunk);
  cache.post.reserve(trunk);

  const Matrix* cur = &cache.input;
  for (std::size_t l = 0; l < trunk; ++l) {
    cache.pre.push_back(linear_forward(*cur, net.layers[l]));
    const Matrix& z = cache.pre.back();
    const bool linear_out = net.head == Head::Plain && l + 1 == trunk;
    if (linear_out) {
      cache.post.push_back(z);
    } else {
      Matrix h(z.rows, z.cols);
      for (std::size_t k = 0; k < z.data.size(); ++k)
        h.data[k] = act_apply(net.activation, net.leaky_slope, z.data[k]);
      cache.post.push_back(std::move(h));
    }
    cur = &cache.post.back();
  }

  if (net.head == Head::MeanVar) {
    cache.mean = linear_forward(*cur, net.mean_head);
    cache.raw_var = linear_forward(*cur, net.var_head);
  }
  return cache;
}

namespace {

// Shared trunk backward: g arrives as the adjoint of the last post-activation
// (or of the Plain linear output) and is pulled back to the input.
BackwardResult trunk_backward(const Network& net, const ForwardCache& cache, Matrix g,
                              GradientSet grads) {
  const std::size_t trunk = trunk_count(net);
  for (std::size_t idx = trunk; idx-- > 0;) {
    const bool linear_out = net.head == Head::Plain && idx + 1 == trunk;
    if (!linear_out) {
      const Matrix& z = cache.pre[idx];
      for (std::size_t k = 0; k < g.data.size(); ++k)
        g.data[k] *= act_grad(net.activation, net.leaky_slope, z.data[k]);
    }
    const Matrix& x = idx == 0 ? cache.input : cache.post[idx - 1];
    Matrix gx(x.rows, x.cols);
    linear_backward(x, net.layers[idx], g, grads.layers[idx], gx);
    g = std::move(gx);
  }
  BackwardResult res;
  res.grads = std::move(grads);
  res.input_adjoint = std::move(g);
  return res;
}

void check_cache(const Network& net, const ForwardCache& cache) {
  if (cache.net != &net) fail("backward: cache was produced by a different network");
}

}  // namespace

BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Matrix& out_adjoint) {
  check_cache(net, cache);
  if (net.head != Head::Plain) fail("backward: network has a mean/var head");
  if (out_adjoint.rows != cache.batch() || out_adjoint.cols != net.output_dim())
    fail("backward: adjoint shape mismatch");
  return trunk_backward(net, cache, out_adjoint, zeros_like(net));
}

BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Matrix& mean_adjoint, const Matrix& raw_var_adjoint) {
  check_cache(net, cache);
  if (net.head != Head::MeanVar) fail("backward: network has a plain head");
  if (mean_adjoint.rows != cache.batch() || mean_adjoint.cols != net.output_dim() ||
      !mean_adjoint.same_shape(raw_var_adjoint))
    fail("backward: adjoint shape mismatch");

  GradientSet grads = zeros_like(net);
  const std::size_t trunk = trunk_count(net);
  const Matrix& h = trunk == 0 ? cache.input : cache.post.back();
  Matrix g(h.rows, h.cols);
  linear_backward(h, net.mean_head, mean_adjoint, grads.mean_head, g);
  linear_backward(h, net.var_head, raw_var_adjoint, grads.var_head, g);
  if (trunk == 0) {
    BackwardResult res;
    res.grads = std::move(grads);
    res.input_adjoint = std::move(g);
    return res;
  }
  return trunk_backward(net, cache, std::move(g), std::move(grads));
}

ClipResult clip_global_norm(GradientSet& grads, double max_norm) {
  GradientSet* one[] = {&grads};
  return clip_global_norm(std::span<GradientSet*>(one), max_norm);
}

ClipResult clip_global_norm(std::span<GradientSet*> grads, double max_norm) {
  if (!(max_norm > 0.0)) fail("clip_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (GradientSet* g : grads)
    for (const Vec* buf : gradient_buffers(*g))
      for (double x : *buf) sq += x * x;
  if (!std::isfinite(sq)) fail("clip_global_norm: non-finite gradient");
  ClipResult res;
  res.norm = std::sqrt(sq);
  if (res.norm > max_norm) {
    const double scale = max_norm / res.norm;
    for (GradientSet* g : grads)
      for (Vec* buf : gradient_buffers(*g))
        for (double& x : *buf) x *= scale;
    res.clipped = true;
  }
  return res;
}

OptimizerState adamw_init(const Network& net, double lr, double weight_decay, double beta1,
                          double beta2, double eps) {
  if (!(lr > 0.0)) fail("adamw_init: lr must be positive");
  OptimizerState st;
  st.lr = lr;
  st.weight_decay = weight_decay;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.eps = eps;
  st.m = zeros_like(net);
  st.v = zeros_like(net);
  return st;
}

void adamw_step(Network& net, const GradientSet& grads, OptimizerState& state) {
  auto params = parameter_buffers(net);
  auto gbufs = gradient_buffers(grads);
  auto mbufs = gradient_buffers(state.m);
  auto vbufs = gradient_buffers(state.v);
  if (params.size() != gbufs.size()) fail("adamw_step: gradient shape mismatch");

  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

  for (std::size_t k = 0; k < params.size(); ++k) {
    Vec& p = *params[k];
    const Vec& g = *gbufs[k];
    Vec& m = *mbufs[k];
    Vec& v = *vbufs[k];
    if (p.size() != g.size()) fail("adamw_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] -= state.lr * (mh / (std::sqrt(vh) + state.eps) + state.weight_decay * p[i]);
    }
    if (!all_finite(p)) fail("adamw_step: non-finite parameter after update");
  }
}

// --- serialization ----------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'A', 'M', 'R', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_vec(std::ostream& os, const Vec& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) fail("load_network: truncated stream");
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) fail("load_network: truncated stream");
  return v;
}
void read_vec(std::istream& is, Vec& v) {
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) fail("load_network: truncated stream");
}

void write_layer(std::ostream& os, const DenseLayer& l) {
  write_u32(os, static_cast<std::uint32_t>(l.out));
  write_u32(os, static_cast<std::uint32_t>(l.in));
  write_vec(os, l.w);
  write_vec(os, l.b);
}

DenseLayer read_layer(std::istream& is) {
  DenseLayer l;
  l.out = read_u32(is);
  l.in = read_u32(is);
  if (l.out == 0 || l.in == 0) fail("load_network: corrupt layer dims");
  l.w.resize(l.out * l.in);
  l.b.resize(l.out);
  read_vec(is, l.w);
  read_vec(is, l.b);
  return l;
}
}  // namespace

void save_network(const Network& net, std::ostream& os) {
  os.write(kMagic, 4);
  write_u32(os, kFormatVersion);
  write_u32(os, static_cast<std::uint32_t>(net.activation));
  write_f64(os, net.leaky_slope);
  write_u32(os, static_cast<std::uint32_t>(net.head));
  write_u32(os, static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (std::size_t s : net.layer_sizes) write_u32(os, static_cast<std::uint32_t>(s));
  write_u32(os, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) write_layer(os, l);
  if (net.head == Head::MeanVar) {
    write_layer(os, net.mean_head);
    write_layer(os, net.var_head);
  }
  if (!os) fail("save_network: write failed");
}

Network load_network(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) fail("load_network: bad magic");
  const std::uint32_t version = read_u32(is);
  if (version != kFormatVersion) fail("load_network: unsupported format version");

  Network net;
  const std::uint32_t act = read_u32(is);
  if (act > 2) fail("load_network: corrupt activation tag");
  net.activation = static_cast<Activation>(act);
  net.leaky_slope = read_f64(is);
  const std::uint32_t head = read_u32(is);
  if (head > 1) fail("load_network: corrupt head tag");
  net.head = static_cast<Head>(head);

  const std::uint32_t n_sizes = read_u32(is);
  if (n_sizes < 2) fail("load_network: corrupt layer sizes");
  net.layer_sizes.resize(n_sizes);
  for (auto& s : net.layer_sizes) s = read_u32(is);

  const std::uint32_t n_layers = read_u32(is);
  const std::size_t expect = net.head == Head::Plain ? n_sizes - 1 : n_sizes - 2;
  if (n_layers != expect) fail("load_network: layer count does not match sizes");
  net.layers.reserve(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    net.layers.push_back(read_layer(is));
    if (net.layers.back().in != net.layer_sizes[l] ||
        net.layers.back().out != net.layer_sizes[l + 1])
      fail("load_network: layer dims do not match sizes");
  }
  if (net.head == Head::MeanVar) {
    net.mean_head = read_layer(is);
    net.var_head = read_layer(is);
    const std::size_t width = net.layer_sizes[n_sizes - 2];
    const std::size_t out = net.layer_sizes.back();
    if (net.mean_head.in != width || net.mean_head.out != out ||
        net.var_head.in != width || net.var_head.out != out)
      fail("load_network: head dims do not match sizes");
  }
  return net;
}

}  // namespace amortis::nn
