#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spegcl {

/// nce: classic InfoNCE. neg_only: the positive-free loss, whose positive
/// similarity is pinned to its upper bound 1. align_only: -a.p / tau with no
/// uniformity term (used only by the ablation harness).
enum class LossMode { nce, neg_only, align_only };

/// cross_view: negatives of anchor i are the other-view embeddings j != i.
/// cross_and_in_view: additionally the same-view embeddings j != i.
enum class NegativePolicy { cross_view, cross_and_in_view };

std::string to_string(LossMode m);
std::string to_string(NegativePolicy p);
LossMode parse_loss_mode(const std::string& s);
NegativePolicy parse_negative_policy(const std::string& s);

struct LossConfig {
  double tau = 0.2;
  int m_negatives = 100;
  LossMode mode = LossMode::neg_only;
  NegativePolicy policy = NegativePolicy::cross_view;
  bool symmetrize = true;

  void validate() const;
};

/// -log(e^{s+/tau} / (e^{s+/tau} + sum_i e^{s_i/tau})), evaluated stably.
double info_nce_from_similarities(double positive, std::span<const double> negatives, double tau);

/// -1/tau + log(e^{1/tau} + sum_i e^{s_i/tau}), evaluated stably.
double l_u_from_similarities(std::span<const double> negatives, double tau);

/// Vector forms; `negatives` holds one embedding per row.
double info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                const Eigen::MatrixXd& negatives, double tau);
double l_u(const Eigen::VectorXd& anchor, const Eigen::MatrixXd& negatives, double tau);

/// Negative pool for `anchor`, uniform without replacement. Indices in
/// [0, B) address the other view, [B, 2B) the anchor's own view (only under
/// cross_and_in_view). The anchor and its positive counterpart are never
/// eligible. If m exceeds the pool, the whole pool is returned. Sorted.
std::vector<int> sample_negatives(int batch_size, int anchor, int m, NegativePolicy policy,
                                  std::uint64_t seed);

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_a;              // d loss / d view_a
  Eigen::MatrixXd grad_b;              // d loss / d view_b
  std::vector<double> anchor_losses;   // a->b terms, then b->a terms when symmetrized
  int effective_negatives = 0;
};

/// Graph-level contrastive loss over two views (row i of each view comes
/// from the same graph). Averaged over anchors and, when symmetrized, over
/// both directions.
LossResult loss_and_grad(const Eigen::MatrixXd& view_a, const Eigen::MatrixXd& view_b,
                         const LossConfig& cfg, std::uint64_t seed);

}  // namespace spegcl
