#pragma once

#include "spegcl/graph.hpp"
#include "spegcl/trainer.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spegcl {

/// The classifier used by every report. The downstream protocol this
/// project follows called for an SVM; a softmax probe is used instead.
inline constexpr const char* kProbeClassifier =
    "softmax linear probe (full-batch gradient descent) in place of an SVM";

struct EvalReport {
  std::string mode;
  std::vector<double> fold_accuracies;
  std::vector<double> train_accuracies;
  double mean = 0.0;
  double std = 0.0;  // population std over folds
  std::string config_hash;
  double effective_label_rate = 1.0;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> xs);

/// Fold index per sample. Classes are shuffled independently and dealt
/// round-robin, continuing the rotation from one class to the next, so each
/// fold holds floor or ceil of n_c / k samples of class c. Throws
/// StratificationError when a class has fewer than k samples.
std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

struct ProbeConfig {
  int steps = 500;
  double learning_rate = 0.1;
  double weight_decay = 1e-4;
};

struct LinearModel {
  Eigen::MatrixXd weight;  // d x C
  Eigen::VectorXd bias;

  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;
  std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

/// Multinomial logistic regression from zero, by full-batch gradient
/// descent on mean cross-entropy + (wd/2)||W||^2.
LinearModel fit_softmax(const Eigen::MatrixXd& x, std::span<const int> y, int num_classes,
                        const ProbeConfig& cfg = {});

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// k-fold linear evaluation of frozen embeddings (one row per sample).
EvalReport linear_probe(const Eigen::MatrixXd& embeddings, std::span<const int> labels, int k_folds,
                        std::uint64_t seed, const ProbeConfig& probe = {}, int workers = 1);

struct FinetuneConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int k_folds = 10;
  std::uint64_t fold_seed = 7;
  std::uint64_t seed = 1;
  int workers = 1;
  // Used only when no checkpoint is given.
  EncoderKind kind = EncoderKind::fourier;
  std::vector<int> hidden_dims = {32, 32};
  int emb_dim = 16;

  void validate() const;
  nlohmann::json to_json() const;
};

/// For each fold: take a stratified round(rate * n_c) labeled subset of the
/// training pool, fine-tune encoder and a linear head with cross-entropy
/// and Adam, score the held-out fold. `checkpoint` may be null, in which
/// case the encoder starts from a fresh initialization.
EvalReport semi_supervised_finetune(const Dataset& dataset, const Checkpoint* checkpoint,
                                    double label_rate, const FinetuneConfig& cfg);

enum class AblationMode { pos_and_neg, no_neg, no_pos, no_fouriergnn };

std::string to_string(AblationMode m);
AblationMode parse_ablation_mode(const std::string& s);
/// The results-table row each mode reproduces.
std::string table_row(AblationMode m);
/// Mode -> table row, loss and encoder, as emitted in ablation reports.
nlohmann::json ablation_mode_table();

/// Mean of z_i . z_j over all pairs i != j.
double mean_pairwise_similarity(const Eigen::MatrixXd& embeddings);

struct AblationResult {
  AblationMode mode = AblationMode::no_pos;
  EvalReport report;
  std::vector<double> loss_history;
  double loss_reduction = 0.0;  // (first - last) / |first|
  double mean_pairwise_similarity = 0.0;
};

/// Trains with the mode's loss/encoder (everything else from `base`), then
/// probes the resulting embeddings.
AblationResult ablation_run(const Dataset& dataset, AblationMode mode, const TrainConfig& base,
                            int k_folds = 10, std::uint64_t fold_seed = 7);

}  // namespace spegcl
