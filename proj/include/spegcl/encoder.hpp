#pragma once

#include "spegcl/graph.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spegcl {

enum class EncoderKind { fourier, gcn, gin };

std::string to_string(EncoderKind k);
EncoderKind parse_encoder_kind(const std::string& s);

/// One message-passing layer.
///
/// fourier: relu(Re(IDFT_row(DFT_row(A_hat H W) * theta))), the filter theta
///          acting pointwise on each node's feature spectrum.
/// gcn:     relu(A_hat H W); theta is stored but frozen at 1.
/// gin:     relu(relu(((1 + eps) H + A H) W + b_in) W_mlp + b_out), eps frozen.
struct GraphLayer {
  Eigen::MatrixXd weight;  // d_in x d_out
  Eigen::VectorXd theta_re;
  Eigen::VectorXd theta_im;
  Eigen::MatrixXd mlp_weight;  // gin only, d_out x d_out
  Eigen::VectorXd mlp_bias_in;
  Eigen::VectorXd mlp_bias_out;
  double epsilon = 0.0;

  int in_dim() const { return static_cast<int>(weight.rows()); }
  int out_dim() const { return static_cast<int>(weight.cols()); }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // d_in x d_out
  Eigen::VectorXd bias;
};

/// Encoder weights. Gradients are returned in the same shape, so the struct
/// doubles as the gradient container.
struct EncoderParams {
  EncoderKind kind = EncoderKind::fourier;
  std::vector<int> layer_dims;  // input dim followed by each layer's width
  int emb_dim = 0;
  std::uint64_t seed = 0;
  std::vector<GraphLayer> layers;
  DenseLayer head_hidden;  // d_L -> d_L
  DenseLayer head_out;     // d_L -> emb_dim

  std::size_t num_scalars() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  EncoderParams zeros_like() const;
  bool all_finite() const;
};

/// Glorot-uniform projections, theta = 1 + 0i, zero biases. `layer_dims`
/// lists the input feature dim followed by one entry per layer.
EncoderParams init_params(std::span<const int> layer_dims, int emb_dim, EncoderKind kind,
                          std::uint64_t seed);

/// Intermediates kept for the backward pass of one layer.
struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXcd spectrum;     // fourier: DFT_row(A_hat H W)
  Eigen::MatrixXd pre_activation;
  Eigen::MatrixXd gin_mixed;     // gin: (1 + eps) H + A H
  Eigen::MatrixXd gin_hidden_pre;
};

/// `propagation` is A_hat (normalized, with self loops) for fourier/gcn and
/// the plain binary adjacency for gin.
Eigen::MatrixXd layer_forward(const SparseMatrix& propagation, const Eigen::MatrixXd& h,
                              const GraphLayer& layer, EncoderKind kind,
                              LayerCache* cache = nullptr);

struct LayerGradient {
  GraphLayer params;
  Eigen::MatrixXd input;
};

LayerGradient layer_backward(const SparseMatrix& propagation, const GraphLayer& layer,
                             EncoderKind kind, const LayerCache& cache,
                             const Eigen::MatrixXd& upstream);

/// The operator a layer of `kind` propagates with, built from a batch.
SparseMatrix propagation_operator(const GraphBatch& batch, EncoderKind kind);

struct EncodeCache {
  SparseMatrix propagation;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd pooled;        // B x d_L
  Eigen::MatrixXd head_pre;      // B x d_L
  Eigen::MatrixXd head_hidden;   // relu(head_pre)
  Eigen::MatrixXd projected;     // B x emb, before normalization
  Eigen::VectorXd norms;
  Eigen::MatrixXd embeddings;
  std::vector<int> graph_index;
  std::vector<int> graph_sizes;
};

/// Layers -> mean pool per graph -> two-layer head -> L2 normalize. Row b of
/// the result is the unit-norm embedding of graph b of the batch.
Eigen::MatrixXd encode(const GraphBatch& batch, const EncoderParams& params,
                       EncodeCache* cache = nullptr);

/// Reverse-mode gradient of sum(upstream .* encode(batch)) with respect to
/// every parameter. Frozen parameters (theta for gcn, eps for gin) receive
/// exactly zero.
EncoderParams encode_backward(const GraphBatch& batch, const EncoderParams& params,
                              const Eigen::MatrixXd& upstream);
EncoderParams encode_backward(const EncodeCache& cache, const EncoderParams& params,
                              const Eigen::MatrixXd& upstream);

}  // namespace spegcl
