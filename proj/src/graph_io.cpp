#include "mkgcn/graph_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include "mkgcn/error.hpp"

namespace mkgcn {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size()) throw Error("cannot parse number '" + text + "' in " + what);
  return v;
}

long parse_long(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
    throw Error("cannot parse integer '" + text + "' in " + what);
  return v;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else if (c != '\r' && c != '\n') {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

void write_edge_list(std::ostream& out, const SymmetricMatrix& adjacency) {
  adjacency.for_each_nonzero([&](Index i, Index j, double w) {
    if (i < j) out << i << ' ' << j << ' ' << format_double(w) << '\n';
  });
}

SymmetricMatrix read_edge_list(std::istream& in, Index n_nodes, Storage storage) {
  std::vector<Eigen::Triplet<double>> triplets;
  std::set<std::pair<Index, Index>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream fields(t);
    std::string si, sj, sw, extra;
    const std::string where = "edge list line " + std::to_string(line_no);
    if (!(fields >> si >> sj >> sw) || (fields >> extra)) throw Error(where + ": expected 'i j w'");
    const long i = parse_long(si, where);
    const long j = parse_long(sj, where);
    const double w = parse_double(sw, where);
    if (i < 0 || j < 0 || i >= n_nodes || j >= n_nodes)
      throw Error(where + ": node index out of range [0, " + std::to_string(n_nodes) + ")");
    if (i == j) throw Error(where + ": self loop on node " + std::to_string(i));
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(where + ": weight must be finite and non-negative");
    if (!seen.emplace(std::min(i, j), std::max(i, j)).second) throw Error(where + ": duplicate edge");
    if (w == 0.0) continue;
    triplets.emplace_back(i, j, w);
    triplets.emplace_back(j, i, w);
  }
  SparseMatrix a(n_nodes, n_nodes);
  a.setFromTriplets(triplets.begin(), triplets.end());
  return SymmetricMatrix::from_sparse(std::move(a), storage);
}

void write_features_csv(std::ostream& out, const PopulationGraph& graph) {
  out << "node";
  for (Index f = 0; f < graph.feature_dim(); ++f) out << ",f" << f;
  out << ",label,split\n";
  for (Index i = 0; i < graph.n_nodes(); ++i) {
    out << i;
    for (Index f = 0; f < graph.feature_dim(); ++f) out << ',' << format_double(graph.features()(i, f));
    out << ',' << graph.labels()[i] << ',' << (graph.train_mask()[i] ? "train" : "test") << '\n';
  }
}

FeatureTable read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("features CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header.front() != "node" || header[header.size() - 2] != "label" ||
      header.back() != "split")
    throw Error("features CSV header must be 'node,<features...>,label,split'");

  FeatureTable table;
  table.feature_names.assign(header.begin() + 1, header.end() - 2);
  const std::size_t dim = table.feature_names.size();

  std::vector<std::pair<long, std::vector<std::string>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error("features CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                  " columns, expected " + std::to_string(header.size()));
    const long node = parse_long(fields[0], "column 'node' on line " + std::to_string(line_no));
    rows.emplace_back(node, std::move(fields));
  }
  const auto n = static_cast<Index>(rows.size());
  table.features.resize(n, static_cast<Index>(dim));
  table.labels.assign(rows.size(), -1);
  table.train_mask.assign(rows.size(), false);
  table.test_mask.assign(rows.size(), false);
  std::vector<bool> filled(rows.size(), false);

  for (const auto& [node, fields] : rows) {
    if (node < 0 || node >= n) throw Error("column 'node': id " + std::to_string(node) + " out of range");
    if (filled[node]) throw Error("column 'node': duplicate id " + std::to_string(node));
    filled[node] = true;
    for (std::size_t f = 0; f < dim; ++f)
      table.features(node, static_cast<Index>(f)) = parse_double(fields[f + 1], "column '" + header[f + 1] + "'");
    table.labels[node] = static_cast<int>(parse_long(fields[dim + 1], "column 'label'"));
    const std::string& split = fields[dim + 2];
    if (split == "train") {
      table.train_mask[node] = true;
    } else if (split == "test") {
      table.test_mask[node] = true;
    } else {
      throw Error("column 'split': expected 'train' or 'test', got '" + split + "'");
    }
  }
  return table;
}

void save_dataset(const std::filesystem::path& dir, const PopulationGraph& graph) {
  std::filesystem::create_directories(dir);
  std::ofstream edges(dir / "graph.edges");
  std::ofstream features(dir / "features.csv");
  if (!edges || !features) throw Error("cannot write dataset into " + dir.string());
  write_edge_list(edges, graph.adjacency());
  write_features_csv(features, graph);
  if (!edges || !features) throw Error("write failed in " + dir.string());
}

PopulationGraph load_dataset(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                             Storage storage) {
  std::ifstream features_in(features_path);
  if (!features_in) throw Error("cannot open features file " + features_path.string());
  FeatureTable table = read_features_csv(features_in);
  std::ifstream edges_in(edges_path);
  if (!edges_in) throw Error("cannot open edge list " + edges_path.string());
  SymmetricMatrix adjacency = read_edge_list(edges_in, table.features.rows(), storage);
  return PopulationGraph(std::move(adjacency), std::move(table.features), std::move(table.labels),
                         std::move(table.train_mask), std::move(table.test_mask));
}

}  // namespace mkgcn
