#include "spegcl/objective.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spegcl {

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::nce: return "nce";
    case LossMode::neg_only: return "neg_only";
    case LossMode::align_only: return "align_only";
  }
  return "neg_only";
}

std::string to_string(NegativePolicy p) {
  return p == NegativePolicy::cross_view ? "cross_view" : "cross_and_in_view";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "nce") return LossMode::nce;
  if (s == "neg_only") return LossMode::neg_only;
  if (s == "align_only") return LossMode::align_only;
  throw ArgumentError("unknown loss mode '" + s + "'");
}

NegativePolicy parse_negative_policy(const std::string& s) {
  if (s == "cross_view") return NegativePolicy::cross_view;
  if (s == "cross_and_in_view") return NegativePolicy::cross_and_in_view;
  throw ArgumentError("unknown negative policy '" + s + "'");
}

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ArgumentError("tau must be positive");
  if (m_negatives < 1) throw ArgumentError("m_negatives must be at least 1");
}

namespace {

void check_args(std::span<const double> negatives, double tau) {
  if (negatives.empty()) throw ArgumentError("at least one negative is required");
  if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
}

// log(e^{x0} + sum_i e^{x_i}) with max subtraction.
double log_sum_exp(double x0, std::span<const double> xs, double tau) {
  double hi = x0;
  for (double s : xs) hi = std::max(hi, s / tau);
  double acc = std::exp(x0 - hi);
  for (double s : xs) acc += std::exp(s / tau - hi);
  return hi + std::log(acc);
}

}  // namespace

double info_nce_from_similarities(double positive, std::span<const double> negatives, double tau) {
  check_args(negatives, tau);
  return -positive / tau + log_sum_exp(positive / tau, negatives, tau);
}

double l_u_from_similarities(std::span<const double> negatives, double tau) {
  check_args(negatives, tau);
  return -1.0 / tau + log_sum_exp(1.0 / tau, negatives, tau);
}

namespace {

std::vector<double> similarities(const Eigen::VectorXd& anchor, const Eigen::MatrixXd& negatives) {
  if (negatives.rows() > 0 && negatives.cols() != anchor.size()) {
    throw ArgumentError("negative embeddings have the wrong dimension");
  }
  std::vector<double> s(static_cast<std::size_t>(negatives.rows()));
  for (Eigen::Index i = 0; i < negatives.rows(); ++i) s[i] = negatives.row(i).dot(anchor);
  return s;
}

}  // namespace

double info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                const Eigen::MatrixXd& negatives, double tau) {
  if (positive.size() != anchor.size()) throw ArgumentError("positive has the wrong dimension");
  return info_nce_from_similarities(anchor.dot(positive), similarities(anchor, negatives), tau);
}

double l_u(const Eigen::VectorXd& anchor, const Eigen::MatrixXd& negatives, double tau) {
  return l_u_from_similarities(similarities(anchor, negatives), tau);
}

std::vector<int> sample_negatives(int batch_size, int anchor, int m, NegativePolicy policy,
                                  std::uint64_t seed) {
  if (batch_size < 2) throw ArgumentError("no negatives available: batch size must be at least 2");
  if (anchor < 0 || anchor >= batch_size) throw ArgumentError("anchor index out of range");
  if (m < 1) throw ArgumentError("m must be at least 1");
  std::vector<int> pool;
  pool.reserve(static_cast<std::size_t>(2 * batch_size));
  for (int j = 0; j < batch_size; ++j) {
    if (j != anchor) pool.push_back(j);
  }
  if (policy == NegativePolicy::cross_and_in_view) {
    for (int j = 0; j < batch_size; ++j) {
      if (j != anchor) pool.push_back(batch_size + j);
    }
  }
  if (static_cast<std::size_t>(m) < pool.size()) {
    Rng rng = make_rng(seed, {0x4E6, static_cast<std::uint64_t>(anchor)});
    // partial Fisher-Yates
    for (int i = 0; i < m; ++i) {
      const auto span = static_cast<std::uint64_t>(pool.size() - static_cast<std::size_t>(i));
      const auto pick = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng() % span);
      std::swap(pool[static_cast<std::size_t>(i)], pool[pick]);
    }
    pool.resize(static_cast<std::size_t>(m));
    std::sort(pool.begin(), pool.end());
  }
  return pool;
}

namespace {

// One direction: anchors from `anchors`, positives from `others`. Gradients
// accumulate into grad_anchor / grad_other with weight `scale`.
void one_direction(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& others,
                   const LossConfig& cfg, std::uint64_t seed, double scale,
                   Eigen::MatrixXd& grad_anchor, Eigen::MatrixXd& grad_other,
                   std::vector<double>& anchor_losses, double& total, int& effective) {
  const int n = static_cast<int>(anchors.rows());
  const double tau = cfg.tau;
  for (int i = 0; i < n; ++i) {
    const auto a = anchors.row(i);
    if (cfg.mode == LossMode::align_only) {
      const double l = -a.dot(others.row(i)) / tau;
      anchor_losses.push_back(l);
      total += scale * l;
      grad_anchor.row(i) -= scale / tau * others.row(i);
      grad_other.row(i) -= scale / tau * a;
      continue;
    }
    const std::vector<int> negs = sample_negatives(n, i, cfg.m_negatives, cfg.policy, seed);
    effective = static_cast<int>(negs.size());
    std::vector<double> sims(negs.size());
    for (std::size_t k = 0; k < negs.size(); ++k) {
      const int j = negs[k];
      sims[k] = (j < n ? others.row(j) : anchors.row(j - n)).dot(a);
    }
    const bool nce = cfg.mode == LossMode::nce;
    const double pos_sim = nce ? others.row(i).dot(a) : 1.0;
    double hi = pos_sim / tau;
    for (double s : sims) hi = std::max(hi, s / tau);
    const double pos_w = std::exp(pos_sim / tau - hi);
    double z = pos_w;
    std::vector<double> w(sims.size());
    for (std::size_t k = 0; k < sims.size(); ++k) {
      w[k] = std::exp(sims[k] / tau - hi);
      z += w[k];
    }
    const double l = -pos_sim / tau + hi + std::log(z);
    anchor_losses.push_back(l);
    total += scale * l;

    const double c = scale / tau;
    if (nce) {
      const double p = pos_w / z;
      grad_anchor.row(i) += c * (p - 1.0) * others.row(i);
      grad_other.row(i) += c * (p - 1.0) * a;
    }
    for (std::size_t k = 0; k < sims.size(); ++k) {
      const double p = w[k] / z;
      const int j = negs[k];
      if (j < n) {
        grad_anchor.row(i) += c * p * others.row(j);
        grad_other.row(j) += c * p * a;
      } else {
        grad_anchor.row(i) += c * p * anchors.row(j - n);
        grad_anchor.row(j - n) += c * p * a;
      }
    }
  }
}

}  // namespace

LossResult loss_and_grad(const Eigen::MatrixXd& view_a, const Eigen::MatrixXd& view_b,
                         const LossConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (view_a.rows() != view_b.rows() || view_a.cols() != view_b.cols()) {
    throw ArgumentError("views must have the same shape");
  }
  if (view_a.rows() < 2) throw ArgumentError("no negatives available: batch size must be at least 2");

  LossResult r;
  r.grad_a = Eigen::MatrixXd::Zero(view_a.rows(), view_a.cols());
  r.grad_b = Eigen::MatrixXd::Zero(view_b.rows(), view_b.cols());
  const double directions = cfg.symmetrize ? 2.0 : 1.0;
  const double scale = 1.0 / (directions * static_cast<double>(view_a.rows()));
  one_direction(view_a, view_b, cfg, substream(seed, {0}), scale, r.grad_a, r.grad_b,
                r.anchor_losses, r.loss, r.effective_negatives);
  if (cfg.symmetrize) {
    one_direction(view_b, view_a, cfg, substream(seed, {1}), scale, r.grad_b, r.grad_a,
                  r.anchor_losses, r.loss, r.effective_negatives);
  }
  if (!std::isfinite(r.loss)) throw NumericError("non-finite contrastive loss");
  return r;
}

}  // namespace spegcl
