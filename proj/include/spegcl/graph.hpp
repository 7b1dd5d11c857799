#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spegcl {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Undirected edge, stored with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  auto operator<=>(const Edge&) const = default;
};

/// A single graph: N x d node features and an undirected, self-loop-free
/// edge set. Node order is the canonical (file) order.
struct Graph {
  Eigen::MatrixXd features;
  std::vector<Edge> edges;  // sorted, unique, u < v
  std::optional<int> label;

  int num_nodes() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  /// Symmetric binary adjacency.
  SparseMatrix adjacency() const;
  Eigen::MatrixXd dense_adjacency() const;
  std::vector<int> degrees() const;
};

/// Builds a validated graph. Edges may be given in either direction and may
/// repeat; self-loops and out-of-range endpoints are rejected.
Graph make_graph(Eigen::MatrixXd features, std::span<const std::pair<int, int>> edges,
                 std::optional<int> label = std::nullopt);

/// Throws ArgumentError when an invariant of Graph is broken.
void validate(const Graph& g);

struct Dataset {
  std::string name;
  std::vector<Graph> graphs;
  int num_classes = 0;
  int feature_dim = 0;

  int size() const { return static_cast<int>(graphs.size()); }
  std::vector<int> labels() const;
  double mean_num_nodes() const;
};

void validate(const Dataset& ds);

/// Reads the TUDataset raw text layout (`<name>_A.txt`,
/// `<name>_graph_indicator.txt`, `<name>_graph_labels.txt`, optional
/// `<name>_node_attributes.txt` / `<name>_node_labels.txt`).
///
/// Feature precedence: node attributes, then one-hot node labels, then a
/// single all-ones column. Graph labels are remapped to contiguous [0, C).
Dataset load_tudataset(const std::filesystem::path& root, const std::string& name);

/// Writes `ds` in the same layout (node features as `_node_attributes.txt`,
/// shortest round-trip decimal, so reloading is bit-exact).
void write_tudataset(const Dataset& ds, const std::filesystem::path& root,
                     const std::string& name);

/// Two-class stochastic-block-style generator: class 0 graphs are G(n, p0),
/// class 1 graphs are G(n, p1), alternating by index. Node features are
/// degree statistics plus Gaussian noise.
Dataset make_synthetic_sbm(int n_graphs, int nodes_per_graph, double p_in_class0,
                           double p_in_class1, double feature_noise, std::uint64_t seed);

/// Names of the columns produced by make_synthetic_sbm.
const std::vector<std::string>& synthetic_feature_names();

/// Block-diagonal union of several graphs.
struct GraphBatch {
  SparseMatrix block_adjacency;
  Eigen::MatrixXd stacked_features;
  std::vector<int> graph_index;  // node -> position in batch
  std::vector<int> offsets;      // batch_size + 1 row offsets
  int batch_size = 0;

  int num_nodes() const { return static_cast<int>(stacked_features.rows()); }
};

GraphBatch batch(const Dataset& dataset, std::span<const int> indices);
GraphBatch batch_graphs(std::span<const Graph> graphs);

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
SparseMatrix normalize_adjacency(const SparseMatrix& adjacency);

}  // namespace spegcl
