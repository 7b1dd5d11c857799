#include "spegcl/theory.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/objective.hpp"
#include "spegcl/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace spegcl {

std::string to_string(TheoryLoss l) { return l == TheoryLoss::nce ? "nce" : "neg_only"; }

// ---------------------------------------------------------------------------
// Distributions

EmbeddingDistribution EmbeddingDistribution::two_point(double s_pos) {
  return {DistKind::two_point, 2, 0.0, s_pos};
}

EmbeddingDistribution EmbeddingDistribution::uniform_sphere(int dim, double s_pos) {
  return {DistKind::uniform_sphere, dim, 0.0, s_pos};
}

EmbeddingDistribution EmbeddingDistribution::vmf_like(int dim, double concentration, double s_pos) {
  return {DistKind::vmf_like, dim, concentration, s_pos};
}

EmbeddingDistribution EmbeddingDistribution::orthogonal(double s_pos) {
  return {DistKind::orthogonal, 2, 0.0, s_pos};
}

void EmbeddingDistribution::validate() const {
  if (!(s_pos >= -1.0 && s_pos <= 1.0)) throw ArgumentError("s_pos must lie in [-1, 1]");
  if (dim < 2) throw ArgumentError("distribution dim must be at least 2");
  if (kind == DistKind::vmf_like && !(concentration >= 0.0)) {
    throw ArgumentError("concentration must be non-negative");
  }
}

std::string EmbeddingDistribution::name() const {
  auto num = [](double x) {
    std::string s = std::to_string(x);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  std::string base;
  switch (kind) {
    case DistKind::two_point: base = "two_point"; break;
    case DistKind::uniform_sphere: base = "uniform_sphere(" + std::to_string(dim) + ")"; break;
    case DistKind::vmf_like:
      base = "vmf_like(" + std::to_string(dim) + "," + num(concentration) + ")";
      break;
    case DistKind::orthogonal: base = "orthogonal"; break;
  }
  return base + "[s_pos=" + num(s_pos) + "]";
}

namespace {

Eigen::VectorXd axis(int dim, int i, double sign) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v(i) = sign;
  return v;
}

Eigen::VectorXd gaussian_vector(int dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n(rng);
  return v;
}

Eigen::VectorXd unit_gaussian(int dim, Rng& rng) {
  for (;;) {
    Eigen::VectorXd v = gaussian_vector(dim, rng);
    const double norm = v.norm();
    if (norm > 1e-12) return v / norm;
  }
}

double random_sign(Rng& rng) { return (rng() >> 63) ? 1.0 : -1.0; }

}  // namespace

Eigen::VectorXd EmbeddingDistribution::sample_anchor(Rng& rng) const {
  switch (kind) {
    case DistKind::two_point:
    case DistKind::orthogonal:
      return axis(dim, 0, random_sign(rng));
    case DistKind::uniform_sphere:
      return unit_gaussian(dim, rng);
    case DistKind::vmf_like: {
      Eigen::VectorXd v = gaussian_vector(dim, rng);
      v(0) += concentration;
      const double norm = v.norm();
      return norm > 1e-12 ? Eigen::VectorXd(v / norm) : axis(dim, 0, 1.0);
    }
  }
  return axis(dim, 0, 1.0);
}

Eigen::VectorXd EmbeddingDistribution::sample_negative(Rng& rng) const {
  if (kind == DistKind::orthogonal) return axis(dim, 1, random_sign(rng));
  return sample_anchor(rng);
}

Eigen::VectorXd EmbeddingDistribution::sample_positive(const Eigen::VectorXd& anchor,
                                                       Rng& rng) const {
  if (kind == DistKind::two_point || kind == DistKind::orthogonal) {
    if (s_pos >= 1.0) return anchor;
    return bernoulli(rng, 0.5 * (1.0 + s_pos)) ? Eigen::VectorXd(anchor) : Eigen::VectorXd(-anchor);
  }
  if (s_pos >= 1.0) return anchor;
  Eigen::VectorXd u;
  for (;;) {
    u = gaussian_vector(dim, rng);
    u -= u.dot(anchor) * anchor;
    const double norm = u.norm();
    if (norm > 1e-12) {
      u /= norm;
      break;
    }
  }
  return s_pos * anchor + std::sqrt(std::max(0.0, 1.0 - s_pos * s_pos)) * u;
}

double EmbeddingDistribution::min_positive_similarity() const {
  if (kind == DistKind::two_point || kind == DistKind::orthogonal) return s_pos >= 1.0 ? 1.0 : -1.0;
  return s_pos;
}

std::optional<double> EmbeddingDistribution::log_partition(double tau) const {
  switch (kind) {
    case DistKind::two_point:
      return std::log(std::cosh(1.0 / tau));
    case DistKind::orthogonal:
      return 0.0;
    case DistKind::uniform_sphere: {
      // E[e^{k t}] = Gamma(d/2) (2/k)^nu I_nu(k), nu = d/2 - 1, for t the
      // first coordinate of a uniform point on S^{d-1}.
      const double nu = dim / 2.0 - 1.0;
      const double k = 1.0 / tau;
      return std::lgamma(dim / 2.0) + nu * std::log(2.0 / k) + std::log(std::cyl_bessel_i(nu, k));
    }
    case DistKind::vmf_like:
      return std::nullopt;
  }
  return std::nullopt;
}

std::optional<double> EmbeddingDistribution::closed_form_limit(double tau, TheoryLoss loss) const {
  const auto lp = log_partition(tau);
  if (!lp) return std::nullopt;
  const double alignment = loss == TheoryLoss::nce ? s_pos : 1.0;
  return -alignment / tau + *lp;
}

// ---------------------------------------------------------------------------
// Sampling helpers

namespace {

struct Welford {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  void merge(const Welford& o) {
    if (o.n == 0) return;
    const long total = n + o.n;
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / static_cast<double>(total);
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / static_cast<double>(total);
    n = total;
  }
  double std_error() const {
    return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
};

// Sum over `count` negatives of exp((a.n - 1)/tau) for anchor `anchor`.
// Distributions whose anchor/negative similarity law is known are sampled
// through it directly: two_point similarities are fair +-1 coins, uniform
// sphere similarities are 2 Beta((d-1)/2, (d-1)/2) - 1 by rotation
// invariance, orthogonal ones are identically 0.
double scaled_negative_sum(const EmbeddingDistribution& dist, const Eigen::VectorXd& anchor,
                           long count, double tau, Rng& rng) {
  switch (dist.kind) {
    case DistKind::two_point: {
      long plus = 0;
      long left = count;
      while (left >= 64) {
        plus += std::popcount(rng());
        left -= 64;
      }
      if (left > 0) plus += std::popcount(rng() & ((std::uint64_t{1} << left) - 1));
      return static_cast<double>(plus) +
             static_cast<double>(count - plus) * std::exp(-2.0 / tau);
    }
    case DistKind::orthogonal:
      return static_cast<double>(count) * std::exp(-1.0 / tau);
    case DistKind::uniform_sphere: {
      std::gamma_distribution<double> gamma((dist.dim - 1) / 2.0, 1.0);
      double sum = 0.0;
      for (long i = 0; i < count; ++i) {
        const double x = gamma(rng), y = gamma(rng);
        const double t = 2.0 * x / (x + y) - 1.0;
        sum += std::exp((t - 1.0) / tau);
      }
      return sum;
    }
    case DistKind::vmf_like: {
      double sum = 0.0;
      for (long i = 0; i < count; ++i) {
        sum += std::exp((dist.sample_negative(rng).dot(anchor) - 1.0) / tau);
      }
      return sum;
    }
  }
  return 0.0;
}

double positive_similarity(const EmbeddingDistribution& dist, const Eigen::VectorXd& anchor,
                           Rng& rng) {
  if (dist.s_pos >= 1.0) return 1.0;
  (void)anchor;
  if (dist.kind == DistKind::two_point || dist.kind == DistKind::orthogonal) {
    return bernoulli(rng, 0.5 * (1.0 + dist.s_pos)) ? 1.0 : -1.0;
  }
  return dist.s_pos;
}

// Anchors only matter for the vector-sampled kind.
Eigen::VectorXd anchor_for(const EmbeddingDistribution& dist, Rng& rng) {
  if (dist.kind == DistKind::vmf_like) return dist.sample_anchor(rng);
  return Eigen::VectorXd();
}

}  // namespace

// ---------------------------------------------------------------------------

Estimate limit_estimate(const EmbeddingDistribution& dist, double tau, int trials,
                        std::uint64_t seed, TheoryLoss loss, int inner_samples,
                        const TheoryOptions& options) {
  dist.validate();
  if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
  if (trials < 2 || inner_samples < 1) throw ArgumentError("limit_estimate needs trials >= 2");
  constexpr int kChunk = 64;
  const int chunks = (trials + kChunk - 1) / kChunk;
  std::vector<double> outer(static_cast<std::size_t>(trials));
  const double offset = loss == TheoryLoss::neg_only && options.faults.drop_lu_offset ? 1.0 / tau : 0.0;
  parallel_for(chunks, options.workers, [&](int c) {
    Rng rng = make_rng(seed, {0x11A1, static_cast<std::uint64_t>(c)});
    const int begin = c * kChunk, end = std::min(trials, begin + kChunk);
    for (int t = begin; t < end; ++t) {
      const Eigen::VectorXd anchor = anchor_for(dist, rng);
      const double align = loss == TheoryLoss::nce ? positive_similarity(dist, anchor, rng) : 1.0;
      const double inner = scaled_negative_sum(dist, anchor, inner_samples, tau, rng) /
                           static_cast<double>(inner_samples);
      outer[t] = -align / tau + 1.0 / tau + std::log(inner) + offset;
    }
  });

  Estimate e;
  double sum = 0.0;
  for (double v : outer) sum += v;
  e.value = sum / trials;

  constexpr int kBootstrap = 200;
  Rng rng = make_rng(seed, {0xB0075});
  Welford boot;
  for (int b = 0; b < kBootstrap; ++b) {
    double s = 0.0;
    for (int t = 0; t < trials; ++t) s += outer[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(trials))];
    boot.add(s / trials);
  }
  e.std_error = std::sqrt(boot.m2 / (kBootstrap - 1));
  return e;
}

MCCurve mc_loss_curve(const EmbeddingDistribution& dist, double tau,
                      const std::vector<int>& m_values, int trials, std::uint64_t seed,
                      TheoryLoss loss, const TheoryOptions& options) {
  dist.validate();
  if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
  if (m_values.empty()) throw ArgumentError("m_values must be non-empty");
  for (std::size_t i = 0; i < m_values.size(); ++i) {
    if (m_values[i] < 1 || m_values[i] > 100000) throw ArgumentError("M must lie in [1, 100000]");
    if (i > 0 && m_values[i] <= m_values[i - 1]) {
      throw ArgumentError("m_values must be strictly increasing");
    }
  }
  if (trials < 1000) throw ArgumentError("mc_loss_curve needs at least 1000 trials per point");

  MCCurve curve;
  curve.loss = loss;
  curve.m_values = m_values;
  if (auto cf = dist.closed_form_limit(tau, loss)) {
    curve.limit_estimate = *cf;
    curve.limit_closed_form = true;
  } else {
    const Estimate e = limit_estimate(dist, tau, 2000, substream(seed, {0x1E5}), loss, 10000, options);
    curve.limit_estimate = e.value;
    curve.limit_stderr = e.std_error;
  }

  constexpr int kChunk = 1024;
  const int chunks = (trials + kChunk - 1) / kChunk;
  const double offset = options.faults.drop_lu_offset ? 1.0 / tau : 0.0;
  for (int m : m_values) {
    std::vector<Welford> parts(static_cast<std::size_t>(chunks));
    parallel_for(chunks, options.workers, [&](int c) {
      Rng rng = make_rng(seed, {0xC0C0, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(c)});
      const int begin = c * kChunk, end = std::min(trials, begin + kChunk);
      const double log_m = std::log(static_cast<double>(m));
      for (int t = begin; t < end; ++t) {
        const Eigen::VectorXd a = anchor_for(dist, rng);
        double value;
        if (loss == TheoryLoss::nce) {
          const double sp = positive_similarity(dist, a, rng);
          const double s = scaled_negative_sum(dist, a, m, tau, rng);
          value = (1.0 - sp) / tau + std::log(std::exp((sp - 1.0) / tau) + s);
        } else {
          const double s = scaled_negative_sum(dist, a, m, tau, rng);
          value = std::log1p(s) + offset;
        }
        parts[static_cast<std::size_t>(c)].add(value - log_m);
      }
    });
    Welford total;
    for (const Welford& w : parts) total.merge(w);
    curve.mean_value.push_back(total.mean);
    curve.mean_dev.push_back(std::abs(total.mean - curve.limit_estimate));
    curve.std_error.push_back(total.std_error());
    curve.trials.push_back(trials);
  }
  return curve;
}

DecayFit fit_decay_exponent(const MCCurve& curve) {
  DecayFit fit;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < curve.m_values.size(); ++i) {
    const double dev = curve.mean_dev[i];
    const double se = i < curve.std_error.size() ? curve.std_error[i] : 0.0;
    if (dev > 3.0 * se && dev > 0.0) {
      fit.used_m.push_back(curve.m_values[i]);
      xs.push_back(std::log(static_cast<double>(curve.m_values[i])));
      ys.push_back(std::log(dev));
    } else {
      fit.excluded_m.push_back(curve.m_values[i]);
    }
  }
  if (xs.size() < 4) {
    throw InsufficientDataError("decay fit needs at least 4 points clear of Monte-Carlo noise, have " +
                                std::to_string(xs.size()));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0) throw InsufficientDataError("decay fit needs distinct M values");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

Prop1Report check_prop1(const EmbeddingDistribution& dist, double tau, long draws,
                        std::uint64_t seed, int max_negatives, const TheoryOptions& options) {
  dist.validate();
  if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
  if (draws < 1 || max_negatives < 1) throw ArgumentError("check_prop1 needs draws and negatives");
  constexpr double kSlackTol = 1e-12;

  Prop1Report rep;
  rep.distribution = dist.name();
  rep.tau = tau;
  rep.draws = draws;
  rep.slack = (1.0 - dist.min_positive_similarity()) / tau;
  const double offset = options.faults.drop_lu_offset ? 1.0 / tau : 0.0;

  constexpr long kChunk = 1024;
  const int chunks = static_cast<int>((draws + kChunk - 1) / kChunk);
  std::vector<Prop1Report> parts(static_cast<std::size_t>(chunks));
  parallel_for(chunks, options.workers, [&](int c) {
    Prop1Report& part = parts[static_cast<std::size_t>(c)];
    Rng rng = make_rng(seed, {0x9409, static_cast<std::uint64_t>(c)});
    const long begin = c * kChunk, end = std::min(draws, begin + kChunk);
    std::vector<double> sims;
    for (long t = begin; t < end; ++t) {
      const Eigen::VectorXd a = dist.sample_anchor(rng);
      const Eigen::VectorXd p = dist.sample_positive(a, rng);
      const int m = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_negatives));
      sims.resize(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) sims[i] = dist.sample_negative(rng).dot(a);
      const double lu = l_u_from_similarities(sims, tau) + offset;
      const double nce = info_nce_from_similarities(a.dot(p), sims, tau);
      const double lower = lu - nce;
      const double upper = nce - (lu + rep.slack);
      if (lower > kSlackTol) ++part.lower_violations;
      if (upper > kSlackTol) ++part.upper_violations;
      part.max_lower_excess = std::max(part.max_lower_excess, lower);
      part.max_upper_excess = std::max(part.max_upper_excess, upper);
      part.max_abs_gap = std::max(part.max_abs_gap, std::abs(nce - lu));
    }
  });
  rep.max_lower_excess = -std::numeric_limits<double>::infinity();
  rep.max_upper_excess = -std::numeric_limits<double>::infinity();
  for (const Prop1Report& part : parts) {
    rep.lower_violations += part.lower_violations;
    rep.upper_violations += part.upper_violations;
    rep.max_lower_excess = std::max(rep.max_lower_excess, part.max_lower_excess);
    rep.max_upper_excess = std::max(rep.max_upper_excess, part.max_upper_excess);
    rep.max_abs_gap = std::max(rep.max_abs_gap, part.max_abs_gap);
  }
  return rep;
}

bool strictly_decreasing(const MCCurve& curve, const std::vector<int>& m_subset) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < curve.m_values.size(); ++i) {
    if (m_subset.empty() ||
        std::find(m_subset.begin(), m_subset.end(), curve.m_values[i]) != m_subset.end()) {
      idx.push_back(i);
    }
  }
  if (idx.size() < 2) return false;
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    const std::size_t i = idx[k], j = idx[k + 1];
    const double se = std::hypot(curve.std_error[i], curve.std_error[j]);
    if (!(curve.mean_dev[i] - curve.mean_dev[j] > 2.0 * se)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

TheorySuiteResult run_theory_suite(const TheorySuiteConfig& cfg) {
  for (const auto* ms : {&cfg.m_values, &cfg.sphere_m_values}) {
    if (ms->size() < 4) {
      throw InsufficientDataError("decay fit needs at least 4 values of M, got " + std::to_string(ms->size()));
    }
  }
  TheorySuiteResult res;
  const TheoryOptions& opt = cfg.options;

  const std::vector<EmbeddingDistribution> prop1_dists = {
      EmbeddingDistribution::two_point(1.0), EmbeddingDistribution::two_point(0.0),
      EmbeddingDistribution::uniform_sphere(8, 1.0), EmbeddingDistribution::uniform_sphere(8, 0.5),
      EmbeddingDistribution::vmf_like(8, 4.0, 0.8)};
  res.prop1_ok = true;
  std::uint64_t k = 0;
  for (const auto& dist : prop1_dists) {
    for (double tau : cfg.taus) {
      Prop1Report r = check_prop1(dist, tau, cfg.prop1_draws, substream(cfg.seed, {0x1, k++}), 64, opt);
      res.prop1_ok = res.prop1_ok && r.lower_violations == 0 && r.upper_violations == 0;
      res.prop1.push_back(std::move(r));
    }
  }

  struct CurveSpec {
    EmbeddingDistribution dist;
    std::vector<int> m_values;
    int trials;
    std::vector<int> decades;
  };
  const std::vector<CurveSpec> specs = {
      {EmbeddingDistribution::two_point(1.0), cfg.m_values, cfg.two_point_trials, {10, 100, 1000, 10000}},
      {EmbeddingDistribution::uniform_sphere(8, 1.0), cfg.sphere_m_values, cfg.sphere_trials, {10, 100, 1000}},
  };
  res.curves_ok = true;
  for (const CurveSpec& spec : specs) {
    for (TheoryLoss loss : {TheoryLoss::neg_only, TheoryLoss::nce}) {
      CurveResult cr;
      cr.distribution = spec.dist.name();
      cr.tau = 1.0;
      cr.curve = mc_loss_curve(spec.dist, 1.0, spec.m_values, spec.trials,
                               substream(cfg.seed, {0x2, k++}), loss, opt);
      try {
        cr.fit = fit_decay_exponent(cr.curve);
        cr.slope_ok = cr.fit->slope <= cfg.slope_threshold;
      } catch (const InsufficientDataError& e) {
        cr.fit_error = e.what();
        cr.slope_ok = false;
      }
      std::vector<int> decades;
      for (int m : spec.decades) {
        if (std::find(spec.m_values.begin(), spec.m_values.end(), m) != spec.m_values.end()) {
          decades.push_back(m);
        }
      }
      cr.monotone = decades.size() < 2 || strictly_decreasing(cr.curve, decades);
      res.curves_ok = res.curves_ok && cr.slope_ok && cr.monotone;
      res.curves.push_back(std::move(cr));
    }
  }

  auto closed_check = [&](const std::string& name, const EmbeddingDistribution& dist, TheoryLoss loss) {
    LimitCheck lc;
    lc.name = name;
    lc.estimate = limit_estimate(dist, 1.0, cfg.limit_trials, substream(cfg.seed, {0x3, k++}), loss, 10000, opt);
    lc.reference = *dist.closed_form_limit(1.0, loss);
    lc.ok = std::abs(lc.estimate.value - lc.reference) <= 3.0 * lc.estimate.std_error;
    return lc;
  };
  res.limits.push_back(closed_check("two_point[s_pos=1] nce vs closed form",
                                    EmbeddingDistribution::two_point(1.0), TheoryLoss::nce));
  res.limits.push_back(closed_check("two_point[s_pos=0] nce vs closed form",
                                    EmbeddingDistribution::two_point(0.0), TheoryLoss::nce));
  res.limits.push_back(closed_check("uniform_sphere(8)[s_pos=1] nce vs closed form",
                                    EmbeddingDistribution::uniform_sphere(8, 1.0), TheoryLoss::nce));
  {
    const auto dist = EmbeddingDistribution::two_point(1.0);
    LimitCheck lc;
    lc.name = "two_point[s_pos=1] neg_only vs nce limit";
    lc.estimate = limit_estimate(dist, 1.0, cfg.limit_trials, substream(cfg.seed, {0x3, k++}),
                                 TheoryLoss::neg_only, 10000, opt);
    const Estimate other = limit_estimate(dist, 1.0, cfg.limit_trials, substream(cfg.seed, {0x3, k++}),
                                          TheoryLoss::nce, 10000, opt);
    lc.reference = other.value;
    lc.reference_stderr = other.std_error;
    lc.ok = std::abs(lc.estimate.value - lc.reference) <=
            3.0 * std::hypot(lc.estimate.std_error, other.std_error);
    res.limits.push_back(lc);
  }
  res.limits_ok = std::all_of(res.limits.begin(), res.limits.end(), [](const LimitCheck& l) { return l.ok; });
  return res;
}

}  // namespace spegcl
