#include "spegcl/errors.hpp"
#include "spegcl/graph.hpp"
#include "spegcl/io.hpp"

#include <gtest/gtest.h>


#include <cstdlib>
#include <filesystem>
#include <random>

using namespace spegcl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("spegcl_test_graph_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Triangle (graph 1, label 5) and single edge (graph 2, label 9).
fs::path write_fixture(const std::string& tag, bool with_attributes, bool with_node_labels) {
  const fs::path dir = scratch_dir(tag);
  write_file(dir / "T_A.txt", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n");
  write_file(dir / "T_graph_indicator.txt", "1\n1\n1\n2\n2\n");
  write_file(dir / "T_graph_labels.txt", "5\n9\n");
  if (with_attributes) write_file(dir / "T_node_attributes.txt", "0.5, 1\n1.5, 2\n2.5, 3\n3.5, 4\n4.5, 5\n");
  if (with_node_labels) write_file(dir / "T_node_labels.txt", "0\n2\n1\n0\n2\n");
  return dir;
}

Graph path_graph(int n, int d = 2) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return make_graph(Eigen::MatrixXd::Random(n, d), e, 0);
}

}  // namespace

TEST(TuDataset, LoadsTwoGraphFixture) {
  const Dataset ds = load_tudataset(write_fixture("basic", false, false), "T");
  ASSERT_EQ(ds.size(), 2);
  EXPECT_EQ(ds.graphs[0].num_nodes(), 3);
  EXPECT_EQ(ds.graphs[1].num_nodes(), 2);
  EXPECT_EQ(ds.graphs[0].num_edges(), 3);
  EXPECT_EQ(ds.graphs[1].num_edges(), 1);
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.labels(), (std::vector<int>{0, 1}));
  EXPECT_EQ(ds.feature_dim, 1);
  EXPECT_TRUE((ds.graphs[0].features.array() == 1.0).all());
}

TEST(TuDataset, FeaturePrecedence) {
  const Dataset attrs = load_tudataset(write_fixture("attrs", true, true), "T");
  EXPECT_EQ(attrs.feature_dim, 2);
  EXPECT_EQ(attrs.graphs[1].features(0, 0), 3.5);

  const Dataset onehot = load_tudataset(write_fixture("onehot", false, true), "T");
  ASSERT_EQ(onehot.feature_dim, 3);
  Eigen::MatrixXd expect(3, 3);
  expect << 1, 0, 0, 0, 0, 1, 0, 1, 0;
  EXPECT_EQ(onehot.graphs[0].features, expect);
}

TEST(TuDataset, MissingMandatoryFileNamesIt) {
  const fs::path dir = write_fixture("missing", false, false);
  fs::remove(dir / "T_graph_labels.txt");
  try {
    load_tudataset(dir, "T");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("T_graph_labels.txt"), std::string::npos);
  }
}

TEST(TuDataset, CrossGraphEdgeReportsLine) {
  const fs::path dir = write_fixture("cross", false, false);
  write_file(dir / "T_A.txt", "1, 2\n2, 1\n3, 4\n");
  try {
    load_tudataset(dir, "T");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST(TuDataset, WriteThenLoadIsBitExact) {
  const Dataset ds = make_synthetic_sbm(6, 7, 0.3, 0.6, 0.37, 3);
  const fs::path dir = scratch_dir("roundtrip");
  write_tudataset(ds, dir, "RT");
  const Dataset back = load_tudataset(dir, "RT");
  ASSERT_EQ(back.size(), ds.size());
  for (int i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.graphs[i].features, ds.graphs[i].features);
    EXPECT_EQ(back.graphs[i].edges, ds.graphs[i].edges);
    EXPECT_EQ(back.graphs[i].label, ds.graphs[i].label);
  }
  const GraphBatch b1 = batch(ds, std::vector<int>{0, 1, 2, 3, 4, 5});
  const GraphBatch b2 = batch(back, std::vector<int>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(Eigen::MatrixXd(b1.block_adjacency), Eigen::MatrixXd(b2.block_adjacency));
  EXPECT_EQ(b1.stacked_features, b2.stacked_features);
}

// Optional: set SPEGCL_TU_ROOT to a directory holding MUTAG/ and PROTEINS/.
TEST(TuDataset, RealBenchmarks) {
  const char* root = std::getenv("SPEGCL_TU_ROOT");
  if (!root) GTEST_SKIP() << "SPEGCL_TU_ROOT not set";
  const fs::path mutag = fs::path(root) / "MUTAG";
  if (fs::exists(mutag)) {
    const Dataset ds = load_tudataset(mutag, "MUTAG");
    EXPECT_EQ(ds.size(), 188);
    EXPECT_NEAR(ds.mean_num_nodes(), 17.93, 0.01);
  }
  const fs::path proteins = fs::path(root) / "PROTEINS";
  if (fs::exists(proteins)) {
    const Dataset ds = load_tudataset(proteins, "PROTEINS");
    EXPECT_EQ(ds.size(), 1113);
    EXPECT_EQ(ds.num_classes, 2);
  }
}

TEST(Graph, RejectsSelfLoopsAndBadEndpoints) {
  const std::vector<std::pair<int, int>> loop = {{1, 1}};
  EXPECT_THROW(make_graph(Eigen::MatrixXd::Ones(3, 1), loop), ArgumentError);
  const std::vector<std::pair<int, int>> out = {{0, 3}};
  EXPECT_THROW(make_graph(Eigen::MatrixXd::Ones(3, 1), out), ArgumentError);
}

TEST(Graph, AdjacencySymmetricAndDeduplicated) {
  const std::vector<std::pair<int, int>> e = {{0, 1}, {1, 0}, {2, 1}, {0, 1}};
  const Graph g = make_graph(Eigen::MatrixXd::Ones(3, 1), e);
  EXPECT_EQ(g.num_edges(), 2);
  const Eigen::MatrixXd a = g.dense_adjacency();
  EXPECT_EQ(a, a.transpose());
  EXPECT_EQ(a.diagonal().sum(), 0.0);
}

TEST(Sbm, DegenerateProbabilities) {
  const Dataset ds = make_synthetic_sbm(4, 10, 0.0, 1.0, 0.0, 7);
  for (const Graph& g : ds.graphs) {
    EXPECT_EQ(g.num_edges(), *g.label == 0 ? 0 : 45);
  }
}

TEST(Sbm, DeterministicGivenSeed) {
  const Dataset a = make_synthetic_sbm(10, 12, 0.2, 0.4, 0.3, 11);
  const Dataset b = make_synthetic_sbm(10, 12, 0.2, 0.4, 0.3, 11);
  for (int i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.graphs[i].features, b.graphs[i].features);
    EXPECT_EQ(a.graphs[i].edges, b.graphs[i].edges);
  }
}

TEST(Sbm, MeanDegreeRatioMatchesBinomialExpectation) {
  // E[deg] = p (n - 1): class 1 / class 0 = 0.3 / 0.1 = 3.
  const Dataset ds = make_synthetic_sbm(100, 30, 0.1, 0.3, 0.1, 5);
  double deg[2] = {0, 0};
  for (const Graph& g : ds.graphs) deg[*g.label] += 2.0 * g.num_edges() / g.num_nodes();
  EXPECT_NEAR(deg[1] / deg[0], 3.0, 0.6);
}

TEST(Sbm, EqualProbabilitiesIndistinguishable) {
  const Dataset ds = make_synthetic_sbm(200, 20, 0.2, 0.2, 0.1, 9);
  std::vector<double> d[2];
  for (const Graph& g : ds.graphs) d[*g.label].push_back(2.0 * g.num_edges() / g.num_nodes());
  auto stats = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / (v.size() - 1) / v.size()};
  };
  const auto [m0, v0] = stats(d[0]);
  const auto [m1, v1] = stats(d[1]);
  EXPECT_LT(std::abs(m0 - m1), 3.0 * std::sqrt(v0 + v1));
}

TEST(Sbm, ArgumentErrors) {
  EXPECT_THROW(make_synthetic_sbm(4, 1, 0.1, 0.2, 0.0, 1), ArgumentError);
  EXPECT_THROW(make_synthetic_sbm(3, 5, 0.1, 0.2, 0.0, 1), ArgumentError);
  EXPECT_THROW(make_synthetic_sbm(4, 5, -0.1, 0.2, 0.0, 1), ArgumentError);
}

TEST(Batch, BlockDiagonal) {
  std::vector<Graph> gs = {path_graph(3), path_graph(2)};
  const GraphBatch b = batch_graphs(gs);
  const Eigen::MatrixXd a = b.block_adjacency;
  ASSERT_EQ(a.rows(), 5);
  EXPECT_EQ(a.block(0, 3, 3, 2).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(a.block(3, 0, 2, 3).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(a.block(0, 0, 3, 3), gs[0].dense_adjacency());
  EXPECT_EQ(b.graph_index, (std::vector<int>{0, 0, 0, 1, 1}));
  EXPECT_EQ(b.offsets, (std::vector<int>{0, 3, 5}));
}

TEST(Batch, SingletonEqualsGraph) {
  std::vector<Graph> gs = {path_graph(4)};
  const GraphBatch b = batch_graphs(gs);
  EXPECT_EQ(Eigen::MatrixXd(b.block_adjacency), gs[0].dense_adjacency());
}

TEST(Batch, OrderPermutesRows) {
  const Dataset ds = make_synthetic_sbm(2, 4, 0.5, 0.5, 0.2, 1);
  const GraphBatch ab = batch(ds, std::vector<int>{0, 1});
  const GraphBatch ba = batch(ds, std::vector<int>{1, 0});
  EXPECT_EQ(ab.stacked_features.topRows(4), ba.stacked_features.bottomRows(4));
  EXPECT_EQ(ab.stacked_features.bottomRows(4), ba.stacked_features.topRows(4));
}

TEST(Batch, OutOfRangeIndex) {
  const Dataset ds = make_synthetic_sbm(2, 4, 0.5, 0.5, 0.2, 1);
  EXPECT_THROW(batch(ds, std::vector<int>{0, 2}), ArgumentError);
}

TEST(NormalizeAdjacency, HandCases) {
  SparseMatrix zero(1, 1);
  EXPECT_DOUBLE_EQ(Eigen::MatrixXd(normalize_adjacency(zero))(0, 0), 1.0);
  const Graph edge = path_graph(2);
  const Eigen::MatrixXd n = normalize_adjacency(edge.adjacency());
  EXPECT_TRUE(n.isApproxToConstant(0.5, 1e-15));
}

TEST(NormalizeAdjacency, SymmetricWithBoundedSpectralRadius) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 20);
    std::vector<std::pair<int, int>> e;
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (rng() % 3 == 0) e.emplace_back(u, v);
      }
    }
    const Graph g = make_graph(Eigen::MatrixXd::Ones(n, 1), e);
    const Eigen::MatrixXd a = normalize_adjacency(g.adjacency());
    EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    // Power iteration oracle for the spectral radius.
    Eigen::VectorXd v = Eigen::VectorXd::Random(n);
    double lambda = 0;
    for (int it = 0; it < 500; ++it) {
      const Eigen::VectorXd w = a * v;
      lambda = w.norm() / v.norm();
      v = w / w.norm();
    }
    EXPECT_LE(lambda, 1.0 + 1e-9);
    EXPECT_GT(a.minCoeff(), -1e-300);
    EXPECT_LE(a.maxCoeff(), 1.0);
  }
}
