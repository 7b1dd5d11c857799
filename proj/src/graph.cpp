#include "spegcl/graph.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace spegcl {

SparseMatrix Graph::adjacency() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 2);
  for (const Edge& e : edges) {
    triplets.emplace_back(e.u, e.v, 1.0);
    triplets.emplace_back(e.v, e.u, 1.0);
  }
  SparseMatrix a(num_nodes(), num_nodes());
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

Eigen::MatrixXd Graph::dense_adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(num_nodes(), num_nodes());
  for (const Edge& e : edges) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

std::vector<int> Graph::degrees() const {
  std::vector<int> deg(num_nodes(), 0);
  for (const Edge& e : edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return deg;
}

Graph make_graph(Eigen::MatrixXd features, std::span<const std::pair<int, int>> edges,
                 std::optional<int> label) {
  Graph g;
  g.features = std::move(features);
  g.label = label;
  const int n = g.num_nodes();
  if (n < 1) throw ArgumentError("graph must have at least one node");
  g.edges.reserve(edges.size());
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw ArgumentError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                          ") outside node range [0, " + std::to_string(n) + ")");
    }
    if (a == b) throw ArgumentError("self-loop on node " + std::to_string(a));
    g.edges.push_back(Edge{std::min(a, b), std::max(a, b)});
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

void validate(const Graph& g) {
  const int n = g.num_nodes();
  if (n < 1) throw ArgumentError("graph must have at least one node");
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const Edge& e = g.edges[i];
    if (e.u < 0 || e.v >= n || e.u >= e.v) {
      throw ArgumentError("malformed edge (" + std::to_string(e.u) + ", " +
                          std::to_string(e.v) + ")");
    }
    if (i > 0 && !(g.edges[i - 1] < e)) throw ArgumentError("edge list not sorted/unique");
  }
  if (!g.features.allFinite()) throw ArgumentError("non-finite node feature");
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (const Graph& g : graphs) out.push_back(g.label.value_or(-1));
  return out;
}

double Dataset::mean_num_nodes() const {
  if (graphs.empty()) return 0.0;
  double total = 0.0;
  for (const Graph& g : graphs) total += g.num_nodes();
  return total / static_cast<double>(graphs.size());
}

void validate(const Dataset& ds) {
  if (ds.num_classes < 1) throw ArgumentError("dataset needs at least one class");
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    const Graph& g = ds.graphs[i];
    validate(g);
    if (g.feature_dim() != ds.feature_dim) {
      throw ArgumentError("graph " + std::to_string(i) + " has feature dim " +
                          std::to_string(g.feature_dim()) + ", dataset has " +
                          std::to_string(ds.feature_dim));
    }
    if (g.label && (*g.label < 0 || *g.label >= ds.num_classes)) {
      throw ArgumentError("graph " + std::to_string(i) + " label out of range");
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic data

const std::vector<std::string>& synthetic_feature_names() {
  static const std::vector<std::string> names = {"degree", "neighbor_degree", "clustering",
                                                 "bias"};
  return names;
}

namespace {

// Degree statistics per node, each scaled to [0, 1].
Eigen::MatrixXd degree_features(int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<int>> nbrs(n);
  for (const Edge& e : edges) {
    nbrs[e.u].push_back(e.v);
    nbrs[e.v].push_back(e.u);
  }
  Eigen::MatrixXd x(n, 4);
  const double scale = n > 1 ? 1.0 / (n - 1) : 1.0;
  for (int i = 0; i < n; ++i) {
    const auto& ni = nbrs[i];
    const double deg = static_cast<double>(ni.size());
    double nbr_deg = 0.0;
    for (int j : ni) nbr_deg += static_cast<double>(nbrs[j].size());
    if (!ni.empty()) nbr_deg /= deg;
    int closed = 0;
    for (std::size_t a = 0; a < ni.size(); ++a) {
      for (std::size_t b = a + 1; b < ni.size(); ++b) {
        const auto& na = nbrs[ni[a]];
        if (std::find(na.begin(), na.end(), ni[b]) != na.end()) ++closed;
      }
    }
    const double pairs = deg * (deg - 1.0) / 2.0;
    x(i, 0) = deg * scale;
    x(i, 1) = nbr_deg * scale;
    x(i, 2) = pairs > 0 ? closed / pairs : 0.0;
    x(i, 3) = 1.0;
  }
  return x;
}

}  // namespace

Dataset make_synthetic_sbm(int n_graphs, int nodes_per_graph, double p_in_class0,
                           double p_in_class1, double feature_noise, std::uint64_t seed) {
  if (nodes_per_graph < 2) throw ArgumentError("nodes_per_graph must be at least 2");
  if (n_graphs < 2 || n_graphs % 2 != 0) throw ArgumentError("n_graphs must be even and >= 2");
  for (double p : {p_in_class0, p_in_class1}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("edge probability must lie in [0, 1]");
  }
  if (!(feature_noise >= 0.0)) throw ArgumentError("feature_noise must be non-negative");

  Dataset ds;
  ds.name = "synth_sbm";
  ds.num_classes = 2;
  ds.feature_dim = static_cast<int>(synthetic_feature_names().size());
  ds.graphs.reserve(n_graphs);
  for (int gi = 0; gi < n_graphs; ++gi) {
    const int label = gi % 2;
    const double p = label == 0 ? p_in_class0 : p_in_class1;
    Rng rng = make_rng(seed, {0x5B3, static_cast<std::uint64_t>(gi)});
    Graph g;
    g.label = label;
    for (int u = 0; u < nodes_per_graph; ++u) {
      for (int v = u + 1; v < nodes_per_graph; ++v) {
        if (bernoulli(rng, p)) g.edges.push_back(Edge{u, v});
      }
    }
    g.features = degree_features(nodes_per_graph, g.edges);
    if (feature_noise > 0.0) {
      std::normal_distribution<double> noise(0.0, feature_noise);
      for (int j = 0; j < g.features.cols(); ++j) {
        for (int i = 0; i < g.features.rows(); ++i) g.features(i, j) += noise(rng);
      }
    }
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Batching

GraphBatch batch_graphs(std::span<const Graph> graphs) {
  if (graphs.empty()) throw ArgumentError("batch must contain at least one graph");
  const int d = graphs.front().feature_dim();
  GraphBatch b;
  b.batch_size = static_cast<int>(graphs.size());
  b.offsets.reserve(graphs.size() + 1);
  b.offsets.push_back(0);
  for (const Graph& g : graphs) {
    if (g.feature_dim() != d) throw ArgumentError("feature dimension mismatch inside batch");
    b.offsets.push_back(b.offsets.back() + g.num_nodes());
  }
  const int total = b.offsets.back();
  b.stacked_features.resize(total, d);
  b.graph_index.resize(total);
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const Graph& g = graphs[k];
    const int off = b.offsets[k];
    b.stacked_features.middleRows(off, g.num_nodes()) = g.features;
    std::fill(b.graph_index.begin() + off, b.graph_index.begin() + off + g.num_nodes(),
              static_cast<int>(k));
    for (const Edge& e : g.edges) {
      triplets.emplace_back(off + e.u, off + e.v, 1.0);
      triplets.emplace_back(off + e.v, off + e.u, 1.0);
    }
  }
  b.block_adjacency.resize(total, total);
  b.block_adjacency.setFromTriplets(triplets.begin(), triplets.end());
  return b;
}

GraphBatch batch(const Dataset& dataset, std::span<const int> indices) {
  if (indices.empty()) throw ArgumentError("batch indices must be non-empty");
  std::vector<Graph> picked;
  picked.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= dataset.size()) {
      throw ArgumentError("batch index " + std::to_string(i) + " out of range");
    }
    picked.push_back(dataset.graphs[i]);
  }
  return batch_graphs(picked);
}

SparseMatrix normalize_adjacency(const SparseMatrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw ArgumentError("adjacency must be square");
  const Eigen::Index n = adjacency.rows();
  Eigen::VectorXd deg = Eigen::VectorXd::Ones(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (SparseMatrix::InnerIterator it(adjacency, r); it; ++it) {
      if (it.col() != r) deg(r) += it.value();
    }
  }
  const Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(adjacency.nonZeros() + n);
  for (Eigen::Index r = 0; r < n; ++r) {
    triplets.emplace_back(r, r, inv_sqrt(r) * inv_sqrt(r));
    for (SparseMatrix::InnerIterator it(adjacency, r); it; ++it) {
      if (it.col() == r) continue;
      triplets.emplace_back(r, it.col(), it.value() * inv_sqrt(r) * inv_sqrt(it.col()));
    }
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

}  // namespace spegcl
