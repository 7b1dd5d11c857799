#include "spegcl/errors.hpp"
#include "spegcl/graph.hpp"
#include "spegcl/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace spegcl {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write file: " + path.string());
  out << contents;
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

namespace {

struct Line {
  int number;
  std::vector<std::string> fields;
};

// TU files separate values by commas and/or whitespace; blank lines skipped.
std::vector<Line> read_table(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IngestError("missing mandatory file: " + path.filename().string());
  }
  std::istringstream in(read_file(path));
  std::vector<Line> out;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    for (char& c : raw) {
      if (c == ',' || c == '\t' || c == '\r') c = ' ';
    }
    std::istringstream fields(raw);
    Line line{number, {}};
    std::string tok;
    while (fields >> tok) line.fields.push_back(tok);
    if (!line.fields.empty()) out.push_back(std::move(line));
  }
  return out;
}

template <typename T>
T parse_number(const std::string& tok, const std::filesystem::path& file, int line) {
  T value{};
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw FormatError(file.filename().string() + ":" + std::to_string(line) +
                      ": cannot parse '" + tok + "'");
  }
  return value;
}

}  // namespace

Dataset load_tudataset(const std::filesystem::path& root, const std::string& name) {
  const auto file = [&](const std::string& suffix) { return root / (name + "_" + suffix + ".txt"); };
  const auto a_path = file("A");
  const auto gi_path = file("graph_indicator");
  const auto gl_path = file("graph_labels");
  for (const auto& p : {a_path, gi_path, gl_path}) {
    if (!std::filesystem::exists(p)) {
      throw IngestError("missing mandatory file: " + p.filename().string());
    }
  }

  // node -> graph (both 0-indexed)
  std::vector<int> node_graph;
  for (const Line& l : read_table(gi_path)) {
    const long g = parse_number<long>(l.fields.at(0), gi_path, l.number);
    if (g < 1) throw FormatError(gi_path.filename().string() + ":" + std::to_string(l.number) +
                                 ": graph ids are 1-indexed");
    node_graph.push_back(static_cast<int>(g - 1));
  }
  const int total_nodes = static_cast<int>(node_graph.size());
  if (total_nodes == 0) throw FormatError(gi_path.filename().string() + ": no nodes");
  for (int i = 1; i < total_nodes; ++i) {
    if (node_graph[i] < node_graph[i - 1]) {
      throw FormatError(gi_path.filename().string() + ":" + std::to_string(i + 1) +
                        ": graph indicator must be non-decreasing");
    }
  }

  std::vector<long> raw_labels;
  for (const Line& l : read_table(gl_path)) {
    raw_labels.push_back(parse_number<long>(l.fields.at(0), gl_path, l.number));
  }
  const int n_graphs = static_cast<int>(raw_labels.size());
  if (node_graph.back() + 1 != n_graphs) {
    throw FormatError(gl_path.filename().string() + ": " + std::to_string(n_graphs) +
                      " labels but graph indicator names " +
                      std::to_string(node_graph.back() + 1) + " graphs");
  }

  std::vector<int> first_node(n_graphs + 1, total_nodes);
  for (int i = total_nodes - 1; i >= 0; --i) first_node[node_graph[i]] = i;
  for (int g = n_graphs - 1; g >= 0; --g) {
    if (first_node[g] == total_nodes) {
      throw FormatError(gi_path.filename().string() + ": graph " + std::to_string(g + 1) +
                        " has no nodes");
    }
  }
  first_node[n_graphs] = total_nodes;

  // Features.
  Eigen::MatrixXd features;
  const auto attr_path = file("node_attributes");
  const auto nl_path = file("node_labels");
  if (std::filesystem::exists(attr_path)) {
    const auto rows = read_table(attr_path);
    if (static_cast<int>(rows.size()) != total_nodes) {
      throw FormatError(attr_path.filename().string() + ": expected " +
                        std::to_string(total_nodes) + " rows, found " +
                        std::to_string(rows.size()));
    }
    const auto d = static_cast<Eigen::Index>(rows.front().fields.size());
    features.resize(total_nodes, d);
    for (int i = 0; i < total_nodes; ++i) {
      if (static_cast<Eigen::Index>(rows[i].fields.size()) != d) {
        throw FormatError(attr_path.filename().string() + ":" + std::to_string(rows[i].number) +
                          ": inconsistent attribute count");
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        features(i, j) = parse_number<double>(rows[i].fields[j], attr_path, rows[i].number);
      }
    }
  } else if (std::filesystem::exists(nl_path)) {
    const auto rows = read_table(nl_path);
    if (static_cast<int>(rows.size()) != total_nodes) {
      throw FormatError(nl_path.filename().string() + ": expected " +
                        std::to_string(total_nodes) + " rows, found " +
                        std::to_string(rows.size()));
    }
    std::vector<long> node_labels;
    std::map<long, int> column;
    for (const Line& l : rows) {
      node_labels.push_back(parse_number<long>(l.fields.at(0), nl_path, l.number));
      column.emplace(node_labels.back(), 0);
    }
    int c = 0;
    for (auto& [label, col] : column) col = c++;
    features = Eigen::MatrixXd::Zero(total_nodes, c);
    for (int i = 0; i < total_nodes; ++i) features(i, column.at(node_labels[i])) = 1.0;
  } else {
    features = Eigen::MatrixXd::Ones(total_nodes, 1);
  }

  // Edges, bucketed per graph in local (0-indexed) ids.
  std::vector<std::vector<std::pair<int, int>>> graph_edges(n_graphs);
  for (const Line& l : read_table(a_path)) {
    if (l.fields.size() < 2) {
      throw FormatError(a_path.filename().string() + ":" + std::to_string(l.number) +
                        ": expected two node ids");
    }
    const long u = parse_number<long>(l.fields[0], a_path, l.number) - 1;
    const long v = parse_number<long>(l.fields[1], a_path, l.number) - 1;
    if (u < 0 || v < 0 || u >= total_nodes || v >= total_nodes) {
      throw FormatError(a_path.filename().string() + ":" + std::to_string(l.number) +
                        ": node id outside [1, " + std::to_string(total_nodes) + "]");
    }
    const int g = node_graph[u];
    if (node_graph[v] != g) {
      throw FormatError(a_path.filename().string() + ":" + std::to_string(l.number) +
                        ": edge endpoint outside its graph's node range");
    }
    if (u == v) continue;  // self-loops are dropped on ingest
    graph_edges[g].emplace_back(static_cast<int>(u - first_node[g]),
                                static_cast<int>(v - first_node[g]));
  }

  std::map<long, int> label_map;
  for (long l : raw_labels) label_map.emplace(l, 0);
  int next = 0;
  for (auto& [raw, mapped] : label_map) mapped = next++;

  Dataset ds;
  ds.name = name;
  ds.num_classes = next;
  ds.feature_dim = static_cast<int>(features.cols());
  ds.graphs.reserve(n_graphs);
  for (int g = 0; g < n_graphs; ++g) {
    const int n = first_node[g + 1] - first_node[g];
    ds.graphs.push_back(make_graph(features.middleRows(first_node[g], n), graph_edges[g],
                                   label_map.at(raw_labels[g])));
  }
  return ds;
}

void write_tudataset(const Dataset& ds, const std::filesystem::path& root,
                     const std::string& name) {
  std::filesystem::create_directories(root);
  std::string a, indicator, labels, attrs;
  int offset = 0;
  for (std::size_t gi = 0; gi < ds.graphs.size(); ++gi) {
    const Graph& g = ds.graphs[gi];
    for (const Edge& e : g.edges) {
      a += std::to_string(offset + e.u + 1) + ", " + std::to_string(offset + e.v + 1) + "\n";
      a += std::to_string(offset + e.v + 1) + ", " + std::to_string(offset + e.u + 1) + "\n";
    }
    for (int i = 0; i < g.num_nodes(); ++i) {
      indicator += std::to_string(gi + 1) + "\n";
      for (int j = 0; j < g.feature_dim(); ++j) {
        if (j) attrs += ", ";
        attrs += format_double(g.features(i, j));
      }
      attrs += "\n";
    }
    labels += std::to_string(g.label.value_or(0)) + "\n";
    offset += g.num_nodes();
  }
  const auto file = [&](const std::string& suffix) { return root / (name + "_" + suffix + ".txt"); };
  write_file(file("A"), a);
  write_file(file("graph_indicator"), indicator);
  write_file(file("graph_labels"), labels);
  write_file(file("node_attributes"), attrs);
}

}  // namespace spegcl
