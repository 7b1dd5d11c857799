#pragma once

#include "spegcl/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spegcl {

enum class TheoryLoss { nce, neg_only };
std::string to_string(TheoryLoss l);

enum class DistKind { two_point, uniform_sphere, vmf_like, orthogonal };

/// Synthetic unit-norm embedding distribution. Anchors and negatives are
/// i.i.d. from the same law except for `orthogonal`, whose anchors are +-e1
/// and whose negatives are +-e2.
///
/// Positives: for two_point/orthogonal, the anchor itself with probability
/// (1 + s_pos)/2 and its antipode otherwise; for the continuous kinds,
/// s_pos * a + sqrt(1 - s_pos^2) * u with u a random unit vector orthogonal
/// to a. Either way E[a.p] = s_pos.
struct EmbeddingDistribution {
  DistKind kind = DistKind::two_point;
  int dim = 2;
  double concentration = 0.0;  // vmf_like only
  double s_pos = 1.0;

  static EmbeddingDistribution two_point(double s_pos = 1.0);
  static EmbeddingDistribution uniform_sphere(int dim, double s_pos = 1.0);
  static EmbeddingDistribution vmf_like(int dim, double concentration, double s_pos = 1.0);
  static EmbeddingDistribution orthogonal(double s_pos = 1.0);

  void validate() const;
  std::string name() const;

  Eigen::VectorXd sample_anchor(Rng& rng) const;
  Eigen::VectorXd sample_negative(Rng& rng) const;
  Eigen::VectorXd sample_positive(const Eigen::VectorXd& anchor, Rng& rng) const;

  /// Smallest similarity a positive pair can have.
  double min_positive_similarity() const;

  /// log E_{n ~ p_y}[exp(a.n / tau)] when it does not depend on the anchor
  /// and has a closed form.
  std::optional<double> log_partition(double tau) const;

  /// Exact large-M limit of E[L(M)] - log M, when available:
  /// -(1/tau) * alignment + log E[exp(a.n/tau)], alignment being E[a.p] for
  /// nce and 1 for neg_only (its positive is pinned to similarity 1).
  std::optional<double> closed_form_limit(double tau, TheoryLoss loss) const;
};

/// Deliberate mutations, used to check that the suite can fail.
struct TheoryFaults {
  bool drop_lu_offset = false;  // l_u without its -1/tau term
};

struct TheoryOptions {
  int workers = 1;
  TheoryFaults faults;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Nested Monte Carlo estimate of the limiting functional: `trials` outer
/// anchors, each with `inner_samples` negatives for the inner expectation.
/// Standard error by bootstrap over the outer values.
Estimate limit_estimate(const EmbeddingDistribution& dist, double tau, int trials,
                        std::uint64_t seed, TheoryLoss loss = TheoryLoss::nce,
                        int inner_samples = 10000, const TheoryOptions& options = {});

struct MCCurve {
  TheoryLoss loss = TheoryLoss::neg_only;
  std::vector<int> m_values;
  std::vector<double> mean_value;  // E[L(M)] - log M
  std::vector<double> mean_dev;    // |mean_value - limit|
  std::vector<double> std_error;
  std::vector<int> trials;
  double limit_estimate = 0.0;
  double limit_stderr = 0.0;
  bool limit_closed_form = false;
};

/// Monte-Carlo estimate of E[L(M)] - log M for each M with fresh i.i.d.
/// draws. The limit is the closed form when the distribution has one and a
/// nested estimate otherwise.
MCCurve mc_loss_curve(const EmbeddingDistribution& dist, double tau,
                      const std::vector<int>& m_values, int trials, std::uint64_t seed,
                      TheoryLoss loss, const TheoryOptions& options = {});

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<int> used_m;
  std::vector<int> excluded_m;  // mean_dev <= 3 * stderr
};

/// Least-squares slope of log(mean_dev) against log(M) over the points that
/// stand clear of Monte-Carlo noise. Throws InsufficientDataError when fewer
/// than four points qualify.
DecayFit fit_decay_exponent(const MCCurve& curve);

struct Prop1Report {
  std::string distribution;
  double tau = 0.0;
  long draws = 0;
  long lower_violations = 0;  // l_u > info_nce + 1e-12
  long upper_violations = 0;  // info_nce > l_u + slack + 1e-12
  double max_lower_excess = 0.0;
  double max_upper_excess = 0.0;
  double max_abs_gap = 0.0;   // max |info_nce - l_u|
  double slack = 0.0;         // (1/tau)(1 - min a.p)
};

/// Per-draw check of l_u <= info_nce <= l_u + (1/tau)(1 - min a.p). Each
/// draw has an anchor, a positive and between 1 and `max_negatives`
/// negatives.
Prop1Report check_prop1(const EmbeddingDistribution& dist, double tau, long draws,
                        std::uint64_t seed, int max_negatives = 64,
                        const TheoryOptions& options = {});

// ---------------------------------------------------------------------------
// Full suite (drives the verify-theory command)

struct TheorySuiteConfig {
  std::uint64_t seed = 1;
  std::vector<double> taus = {0.05, 0.2, 0.5, 1.0, 2.0};
  long prop1_draws = 10000;
  std::vector<int> m_values = {1, 3, 10, 30, 100, 300, 1000, 3000, 10000};
  int two_point_trials = 40000;
  std::vector<int> sphere_m_values = {1, 3, 10, 30, 100, 300, 1000};
  int sphere_trials = 4000;
  int limit_trials = 1000;
  double slope_threshold = -0.45;
  TheoryOptions options;
};

struct CurveResult {
  std::string distribution;
  double tau = 0.0;
  MCCurve curve;
  std::optional<DecayFit> fit;
  std::string fit_error;
  bool monotone = false;
  bool slope_ok = false;
};

struct LimitCheck {
  std::string name;
  Estimate estimate;
  double reference = 0.0;
  double reference_stderr = 0.0;
  bool ok = false;
};

struct TheorySuiteResult {
  std::vector<Prop1Report> prop1;
  std::vector<CurveResult> curves;
  std::vector<LimitCheck> limits;
  bool prop1_ok = false;
  bool curves_ok = false;
  bool limits_ok = false;
  bool passed() const { return prop1_ok && curves_ok && limits_ok; }
};

TheorySuiteResult run_theory_suite(const TheorySuiteConfig& cfg);

/// True when dev[i] - dev[i+1] > 2 * sqrt(se_i^2 + se_{i+1}^2) for every
/// consecutive pair restricted to `m_subset` (all points if empty).
bool strictly_decreasing(const MCCurve& curve, const std::vector<int>& m_subset = {});

}  // namespace spegcl
