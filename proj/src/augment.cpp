#include "spegcl/augment.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/rng.hpp"
#include "spegcl/spectral.hpp"

namespace spegcl {

std::string to_string(ViewFilters f) {
  switch (f) {
    case ViewFilters::low_high: return "low_high";
    case ViewFilters::low_low: return "low_low";
    case ViewFilters::high_high: return "high_high";
  }
  return "low_high";
}

ViewFilters parse_view_filters(const std::string& s) {
  if (s == "low_high") return ViewFilters::low_high;
  if (s == "low_low") return ViewFilters::low_low;
  if (s == "high_high") return ViewFilters::high_high;
  throw ArgumentError("unknown view filter assignment '" + s + "'");
}

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

void AugmentConfig::validate() const {
  check_probability(omega_node, "omega_node");
  check_probability(omega_edge, "omega_edge");
  check_probability(radius_ratio, "radius_ratio");
}

Graph node_mask_view(const Graph& g, double omega, std::uint64_t seed) {
  check_probability(omega, "omega");
  Rng rng = make_rng(seed, {0x4E0DE});
  Graph out = g;
  for (int i = 0; i < out.num_nodes(); ++i) {
    if (!bernoulli(rng, omega)) out.features.row(i).setZero();
  }
  return out;
}

Graph edge_perturb_view(const Graph& g, double omega, std::uint64_t seed) {
  check_probability(omega, "omega");
  Rng rng = make_rng(seed, {0xED6E});
  Graph out;
  out.features = g.features;
  out.label = g.label;
  out.edges.reserve(g.edges.size());
  for (const Edge& e : g.edges) {
    if (bernoulli(rng, omega)) out.edges.push_back(e);
  }
  return out;
}

double low_pass_radius(int rows, int cols, double ratio) {
  return ratio * max_center_distance(rows, cols);
}

namespace {

Eigen::MatrixXd band_pass(const Eigen::MatrixXd& x, double ratio, Band band) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ArgumentError("radius ratio must lie in [0, 1]");
  const int rows = static_cast<int>(x.rows()), cols = static_cast<int>(x.cols());
  const FreqMask mask = build_mask(rows, cols, low_pass_radius(rows, cols, ratio), band);
  return idft2(ifshift(apply_mask(fshift(dft2(x)), mask)));
}

}  // namespace

Eigen::MatrixXd low_pass_features(const Eigen::MatrixXd& x, double ratio) {
  return band_pass(x, ratio, Band::low);
}

Eigen::MatrixXd high_pass_features(const Eigen::MatrixXd& x, double ratio) {
  return band_pass(x, ratio, Band::high);
}

std::pair<Graph, Graph> make_view_pair(const Graph& g, const AugmentConfig& cfg) {
  cfg.validate();
  const Band band_a = cfg.filters == ViewFilters::high_high ? Band::high : Band::low;
  const Band band_b = cfg.filters == ViewFilters::low_low ? Band::low : Band::high;

  Graph a = node_mask_view(g, cfg.omega_node, substream(cfg.seed, {1}));
  a.features = band_pass(a.features, cfg.radius_ratio, band_a);
  Graph b = edge_perturb_view(g, cfg.omega_edge, substream(cfg.seed, {2}));
  b.features = band_pass(b.features, cfg.radius_ratio, band_b);
  return {std::move(a), std::move(b)};
}

}  // namespace spegcl
