#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mkgcn/graph.hpp"

namespace mkgcn {

/// Node table read from a features CSV: `node,f0,f1,...,label,split`.
struct FeatureTable {
  std::vector<std::string> feature_names;
  Matrix features;
  std::vector<int> labels;
  NodeMask train_mask;
  NodeMask test_mask;
};

/// Writes `i j w` lines, i < j, one per undirected edge. Weights use 17
/// significant digits so they read back exactly.
void write_edge_list(std::ostream& out, const SymmetricMatrix& adjacency);

/// Parses an edge list for a graph with n_nodes nodes. Blank lines and lines
/// starting with '#' are skipped. Duplicate edges, self loops, out-of-range
/// indices and negative weights are errors.
SymmetricMatrix read_edge_list(std::istream& in, Index n_nodes, Storage storage = Storage::automatic);

void write_features_csv(std::ostream& out, const PopulationGraph& graph);
FeatureTable read_features_csv(std::istream& in);

/// Writes `<dir>/graph.edges` and `<dir>/features.csv`.
void save_dataset(const std::filesystem::path& dir, const PopulationGraph& graph);
PopulationGraph load_dataset(const std::filesystem::path& edges_path, const std::filesystem::path& features_path,
                             Storage storage = Storage::automatic);

/// Splits one CSV line on commas; no quoting support.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace mkgcn
