#pragma once

#include "spegcl/augment.hpp"
#include "spegcl/encoder.hpp"
#include "spegcl/graph.hpp"
#include "spegcl/objective.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace spegcl {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  AugmentConfig augment;
  LossConfig loss{.policy = NegativePolicy::cross_and_in_view};
  EncoderKind kind = EncoderKind::fourier;
  std::vector<int> hidden_dims = {32, 32};
  int emb_dim = 16;
  int checkpoint_every = 0;  // 0 disables intermediate checkpoints
  int workers = 1;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);

  /// Hash over everything that changes the trajectory. Epoch count,
  /// checkpoint cadence and worker count are excluded so a run can be
  /// extended from its checkpoint.
  std::string hash() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// One bias-corrected Adam update. Non-finite gradients throw NumericError
/// and leave both `params` and `state` untouched.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps);

/// Training state at an epoch boundary. All randomness in training is drawn
/// from seed substreams addressed by (epoch, step, graph), so the seed and
/// the epoch counter are the complete RNG state.
struct Checkpoint {
  EncoderParams params;
  AdamState adam;
  std::string config_hash;
  nlohmann::json config;
  std::uint64_t seed = 0;
  int epochs_completed = 0;
  std::vector<double> loss_history;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  const Checkpoint* resume = nullptr;
  std::function<void(const EpochRecord&, const Checkpoint&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;  // epochs run in this call only
};

/// Contiguous batches of a shuffled order. A trailing batch of one graph is
/// folded into the previous batch, since a lone anchor has no negatives.
std::vector<std::vector<int>> make_batches(std::span<const int> order, int batch_size);

/// Seeded epoch order.
std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch);

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const TrainOptions& options = {});

/// Embeddings of every graph (un-augmented), in dataset order.
Eigen::MatrixXd embed_dataset(const Dataset& dataset, const EncoderParams& params,
                              int batch_size = 64);

}  // namespace spegcl
