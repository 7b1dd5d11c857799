#include "spegcl/encoder.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/rng.hpp"
#include "spegcl/spectral.hpp"

#include <cmath>

namespace spegcl {

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::fourier: return "fourier";
    case EncoderKind::gcn: return "gcn";
    case EncoderKind::gin: return "gin";
  }
  return "fourier";
}

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "fourier") return EncoderKind::fourier;
  if (s == "gcn") return EncoderKind::gcn;
  if (s == "gin") return EncoderKind::gin;
  throw ArgumentError("unknown encoder kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Parameter container

namespace {

// Visits every scalar block in a fixed order; Fn(double* data, size).
template <typename Params, typename Fn>
void for_each_block(Params& p, Fn&& fn) {
  for (auto& l : p.layers) {
    fn(l.weight.data(), l.weight.size());
    fn(l.theta_re.data(), l.theta_re.size());
    fn(l.theta_im.data(), l.theta_im.size());
    if (p.kind == EncoderKind::gin) {
      fn(l.mlp_weight.data(), l.mlp_weight.size());
      fn(l.mlp_bias_in.data(), l.mlp_bias_in.size());
      fn(l.mlp_bias_out.data(), l.mlp_bias_out.size());
      fn(&l.epsilon, Eigen::Index{1});
    }
  }
  fn(p.head_hidden.weight.data(), p.head_hidden.weight.size());
  fn(p.head_hidden.bias.data(), p.head_hidden.bias.size());
  fn(p.head_out.weight.data(), p.head_out.weight.size());
  fn(p.head_out.bias.data(), p.head_out.bias.size());
}

}  // namespace

std::size_t EncoderParams::num_scalars() const {
  std::size_t n = 0;
  for_each_block(*this, [&](const double*, Eigen::Index size) { n += static_cast<std::size_t>(size); });
  return n;
}

std::vector<double> EncoderParams::flatten() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for_each_block(*this, [&](const double* data, Eigen::Index size) {
    out.insert(out.end(), data, data + size);
  });
  return out;
}

void EncoderParams::unflatten(std::span<const double> flat) {
  if (flat.size() != num_scalars()) throw ArgumentError("flat parameter length mismatch");
  std::size_t pos = 0;
  for_each_block(*this, [&](double* data, Eigen::Index size) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), size, data);
    pos += static_cast<std::size_t>(size);
  });
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  for_each_block(z, [](double* data, Eigen::Index size) { std::fill_n(data, size, 0.0); });
  return z;
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  for_each_block(*this, [&](const double* data, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) ok = ok && std::isfinite(data[i]);
  });
  return ok;
}

namespace {

Eigen::MatrixXd glorot(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  return w;
}

}  // namespace

EncoderParams init_params(std::span<const int> layer_dims, int emb_dim, EncoderKind kind,
                          std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw ArgumentError("layer_dims needs the input dim and at least one layer width");
  }
  for (int d : layer_dims) {
    if (d < 1) throw ArgumentError("layer dims must be positive");
  }
  if (emb_dim < 1) throw ArgumentError("embedding dim must be positive");

  EncoderParams p;
  p.kind = kind;
  p.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  p.emb_dim = emb_dim;
  p.seed = seed;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int din = layer_dims[l], dout = layer_dims[l + 1];
    Rng rng = make_rng(seed, {0x1A7E5, l});
    GraphLayer layer;
    layer.weight = glorot(din, dout, rng);
    layer.theta_re = Eigen::VectorXd::Ones(dout);
    layer.theta_im = Eigen::VectorXd::Zero(dout);
    if (kind == EncoderKind::gin) {
      layer.mlp_weight = glorot(dout, dout, rng);
      layer.mlp_bias_in = Eigen::VectorXd::Zero(dout);
      layer.mlp_bias_out = Eigen::VectorXd::Zero(dout);
    }
    p.layers.push_back(std::move(layer));
  }
  const int dl = layer_dims.back();
  Rng rng = make_rng(seed, {0x4EAD});
  p.head_hidden.weight = glorot(dl, dl, rng);
  p.head_hidden.bias = Eigen::VectorXd::Zero(dl);
  p.head_out.weight = glorot(dl, emb_dim, rng);
  p.head_out.bias = Eigen::VectorXd::Zero(emb_dim);
  return p;
}

// ---------------------------------------------------------------------------
// Layers

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& upstream) {
  return (pre.array() > 0.0).select(upstream, 0.0);
}

// Row-wise forward transform of a real matrix.
Eigen::MatrixXcd rows_dft(const Eigen::MatrixXd& x) {
  const FftPlan& plan = fft_plan(static_cast<std::size_t>(x.cols()));
  Eigen::MatrixXcd out(x.rows(), x.cols());
  std::vector<cplx> buf(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) buf[c] = cplx(x(r, c), 0.0);
    plan.forward(buf);
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = buf[c];
  }
  return out;
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace

Eigen::MatrixXd layer_forward(const SparseMatrix& propagation, const Eigen::MatrixXd& h,
                              const GraphLayer& layer, EncoderKind kind, LayerCache* cache) {
  if (h.cols() != layer.weight.rows()) {
    throw ArgumentError("layer input has " + std::to_string(h.cols()) + " columns, weight expects " +
                        std::to_string(layer.weight.rows()));
  }
  if (propagation.rows() != h.rows() || propagation.cols() != h.rows()) {
    throw ArgumentError("propagation operator does not match node count");
  }
  if (cache) cache->input = h;

  Eigen::MatrixXd out;
  switch (kind) {
    case EncoderKind::gcn: {
      Eigen::MatrixXd pre = propagation * (h * layer.weight);
      out = relu(pre);
      if (cache) cache->pre_activation = std::move(pre);
      break;
    }
    case EncoderKind::fourier: {
      const Eigen::MatrixXd mixed = propagation * (h * layer.weight);
      Eigen::MatrixXcd spec = rows_dft(mixed);
      const auto n = static_cast<std::size_t>(mixed.cols());
      const FftPlan& plan = fft_plan(n);
      Eigen::MatrixXd pre(mixed.rows(), mixed.cols());
      std::vector<cplx> buf(n);
      for (Eigen::Index r = 0; r < mixed.rows(); ++r) {
        for (std::size_t k = 0; k < n; ++k) {
          buf[k] = spec(r, k) * cplx(layer.theta_re(k), layer.theta_im(k));
        }
        plan.backward(buf);
        for (std::size_t k = 0; k < n; ++k) pre(r, k) = buf[k].real() / static_cast<double>(n);
      }
      out = relu(pre);
      if (cache) {
        cache->spectrum = std::move(spec);
        cache->pre_activation = std::move(pre);
      }
      break;
    }
    case EncoderKind::gin: {
      Eigen::MatrixXd mixed = propagation * h + (1.0 + layer.epsilon) * h;
      Eigen::MatrixXd hidden_pre = (mixed * layer.weight).rowwise() + layer.mlp_bias_in.transpose();
      Eigen::MatrixXd pre =
          (relu(hidden_pre) * layer.mlp_weight).rowwise() + layer.mlp_bias_out.transpose();
      out = relu(pre);
      if (cache) {
        cache->gin_mixed = std::move(mixed);
        cache->gin_hidden_pre = std::move(hidden_pre);
        cache->pre_activation = std::move(pre);
      }
      break;
    }
  }
  check_finite(out, "layer output");
  return out;
}

LayerGradient layer_backward(const SparseMatrix& propagation, const GraphLayer& layer,
                             EncoderKind kind, const LayerCache& cache,
                             const Eigen::MatrixXd& upstream) {
  LayerGradient g;
  g.params.weight = Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols());
  g.params.theta_re = Eigen::VectorXd::Zero(layer.theta_re.size());
  g.params.theta_im = Eigen::VectorXd::Zero(layer.theta_im.size());
  g.params.mlp_weight = Eigen::MatrixXd::Zero(layer.mlp_weight.rows(), layer.mlp_weight.cols());
  g.params.mlp_bias_in = Eigen::VectorXd::Zero(layer.mlp_bias_in.size());
  g.params.mlp_bias_out = Eigen::VectorXd::Zero(layer.mlp_bias_out.size());
  g.params.epsilon = 0.0;

  const Eigen::MatrixXd grad_pre = relu_backward(cache.pre_activation, upstream);

  if (kind == EncoderKind::gin) {
    const Eigen::MatrixXd hidden = relu(cache.gin_hidden_pre);
    g.params.mlp_weight = hidden.transpose() * grad_pre;
    g.params.mlp_bias_out = grad_pre.colwise().sum().transpose();
    const Eigen::MatrixXd grad_hidden =
        relu_backward(cache.gin_hidden_pre, grad_pre * layer.mlp_weight.transpose());
    g.params.weight = cache.gin_mixed.transpose() * grad_hidden;
    g.params.mlp_bias_in = grad_hidden.colwise().sum().transpose();
    const Eigen::MatrixXd grad_mixed = grad_hidden * layer.weight.transpose();
    g.input = propagation.transpose() * grad_mixed + (1.0 + layer.epsilon) * grad_mixed;
    return g;
  }

  // grad with respect to mixed = A_hat H W
  Eigen::MatrixXd grad_mixed;
  if (kind == EncoderKind::gcn) {
    grad_mixed = grad_pre;
  } else {
    const auto n = static_cast<std::size_t>(grad_pre.cols());
    const FftPlan& plan = fft_plan(n);
    grad_mixed.resize(grad_pre.rows(), grad_pre.cols());
    std::vector<cplx> u(n);
    for (Eigen::Index r = 0; r < grad_pre.rows(); ++r) {
      // u = IDFT(grad row), including the 1/n factor
      for (std::size_t k = 0; k < n; ++k) u[k] = cplx(grad_pre(r, k), 0.0);
      plan.backward(u);
      for (std::size_t k = 0; k < n; ++k) {
        u[k] /= static_cast<double>(n);
        const cplx fu = cache.spectrum(r, k) * u[k];
        g.params.theta_re(k) += fu.real();
        g.params.theta_im(k) -= fu.imag();
        u[k] *= cplx(layer.theta_re(k), layer.theta_im(k));
      }
      plan.forward(u);
      for (std::size_t k = 0; k < n; ++k) grad_mixed(r, k) = u[k].real();
    }
  }
  const Eigen::MatrixXd grad_hw = propagation.transpose() * grad_mixed;
  g.params.weight = cache.input.transpose() * grad_hw;
  g.input = grad_hw * layer.weight.transpose();
  return g;
}

SparseMatrix propagation_operator(const GraphBatch& batch, EncoderKind kind) {
  return kind == EncoderKind::gin ? batch.block_adjacency
                                  : normalize_adjacency(batch.block_adjacency);
}

// ---------------------------------------------------------------------------
// Full encoder

Eigen::MatrixXd encode(const GraphBatch& batch, const EncoderParams& params, EncodeCache* cache) {
  if (params.layers.empty()) throw ArgumentError("encoder has no layers");
  if (batch.stacked_features.cols() != params.layers.front().in_dim()) {
    throw ArgumentError("batch feature dim " + std::to_string(batch.stacked_features.cols()) +
                        " does not match encoder input dim " +
                        std::to_string(params.layers.front().in_dim()));
  }
  EncodeCache local;
  EncodeCache& c = cache ? *cache : local;
  c.propagation = propagation_operator(batch, params.kind);
  c.layers.assign(params.layers.size(), LayerCache{});
  c.graph_index = batch.graph_index;
  c.graph_sizes.assign(batch.batch_size, 0);
  for (int gi : batch.graph_index) ++c.graph_sizes[gi];

  Eigen::MatrixXd h = batch.stacked_features;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = layer_forward(c.propagation, h, params.layers[l], params.kind, &c.layers[l]);
  }

  c.pooled = Eigen::MatrixXd::Zero(batch.batch_size, h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) c.pooled.row(batch.graph_index[i]) += h.row(i);
  for (int b = 0; b < batch.batch_size; ++b) c.pooled.row(b) /= static_cast<double>(c.graph_sizes[b]);

  c.head_pre = (c.pooled * params.head_hidden.weight).rowwise() + params.head_hidden.bias.transpose();
  c.head_hidden = relu(c.head_pre);
  c.projected = (c.head_hidden * params.head_out.weight).rowwise() + params.head_out.bias.transpose();
  c.norms = c.projected.rowwise().norm();
  for (Eigen::Index b = 0; b < c.norms.size(); ++b) {
    if (!(c.norms(b) > 0.0) || !std::isfinite(c.norms(b))) {
      throw NumericError("embedding of batch graph " + std::to_string(b) +
                         " has zero or non-finite norm");
    }
  }
  c.embeddings = c.projected.array().colwise() / c.norms.array();
  return c.embeddings;
}

EncoderParams encode_backward(const EncodeCache& c, const EncoderParams& params,
                              const Eigen::MatrixXd& upstream) {
  if (upstream.rows() != c.embeddings.rows() || upstream.cols() != c.embeddings.cols()) {
    throw ArgumentError("upstream gradient shape does not match embeddings");
  }
  EncoderParams grads = params.zeros_like();

  // d/dv of v/|v| is (I - e e^T)/|v|.
  Eigen::MatrixXd grad_proj(upstream.rows(), upstream.cols());
  for (Eigen::Index b = 0; b < upstream.rows(); ++b) {
    const double dot = c.embeddings.row(b).dot(upstream.row(b));
    grad_proj.row(b) = (upstream.row(b) - dot * c.embeddings.row(b)) / c.norms(b);
  }
  grads.head_out.weight = c.head_hidden.transpose() * grad_proj;
  grads.head_out.bias = grad_proj.colwise().sum().transpose();
  const Eigen::MatrixXd grad_head_pre =
      relu_backward(c.head_pre, grad_proj * params.head_out.weight.transpose());
  grads.head_hidden.weight = c.pooled.transpose() * grad_head_pre;
  grads.head_hidden.bias = grad_head_pre.colwise().sum().transpose();
  const Eigen::MatrixXd grad_pooled = grad_head_pre * params.head_hidden.weight.transpose();

  Eigen::MatrixXd grad_h(static_cast<Eigen::Index>(c.graph_index.size()), grad_pooled.cols());
  for (Eigen::Index i = 0; i < grad_h.rows(); ++i) {
    const int b = c.graph_index[i];
    grad_h.row(i) = grad_pooled.row(b) / static_cast<double>(c.graph_sizes[b]);
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    LayerGradient lg = layer_backward(c.propagation, params.layers[l], params.kind, c.layers[l], grad_h);
    GraphLayer& gl = grads.layers[l];
    gl.weight = std::move(lg.params.weight);
    if (params.kind == EncoderKind::fourier) {
      gl.theta_re = std::move(lg.params.theta_re);
      gl.theta_im = std::move(lg.params.theta_im);
    }
    if (params.kind == EncoderKind::gin) {
      gl.mlp_weight = std::move(lg.params.mlp_weight);
      gl.mlp_bias_in = std::move(lg.params.mlp_bias_in);
      gl.mlp_bias_out = std::move(lg.params.mlp_bias_out);
    }
    grad_h = std::move(lg.input);
  }
  if (!grads.all_finite()) throw NumericError("non-finite parameter gradient");
  return grads;
}

EncoderParams encode_backward(const GraphBatch& batch, const EncoderParams& params,
                              const Eigen::MatrixXd& upstream) {
  EncodeCache cache;
  encode(batch, params, &cache);
  return encode_backward(cache, params, upstream);
}

}  // namespace spegcl
