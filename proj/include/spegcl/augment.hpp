#pragma once

#include "spegcl/graph.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace spegcl {

/// Which frequency band each view keeps (view A, view B).
enum class ViewFilters { low_high, low_low, high_high };

std::string to_string(ViewFilters f);
ViewFilters parse_view_filters(const std::string& s);

struct AugmentConfig {
  double omega_node = 0.9;    // per-node keep probability
  double omega_edge = 0.9;    // per-undirected-edge keep probability
  double radius_ratio = 0.5;  // low-pass radius as a fraction of the max center distance
  ViewFilters filters = ViewFilters::low_high;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Zeroes the feature row of every node whose Bernoulli(omega) draw is 0.
/// Edges are untouched.
Graph node_mask_view(const Graph& g, double omega, std::uint64_t seed);

/// Keeps each undirected edge independently with probability omega. One
/// draw per edge, so the adjacency stays symmetric.
Graph edge_perturb_view(const Graph& g, double omega, std::uint64_t seed);

/// Low-pass radius D^L = r * sqrt((N/2)^2 + (d/2)^2) for an N x d grid.
double low_pass_radius(int rows, int cols, double ratio);

/// dft2 -> fshift -> radial mask -> ifshift -> idft2. Same shape as `x`.
Eigen::MatrixXd low_pass_features(const Eigen::MatrixXd& x, double ratio);
Eigen::MatrixXd high_pass_features(const Eigen::MatrixXd& x, double ratio);

/// View A: node masking then its band filter; view B: edge perturbation then
/// its band filter. The two views draw from separate seed substreams.
std::pair<Graph, Graph> make_view_pair(const Graph& g, const AugmentConfig& cfg);

}  // namespace spegcl
