#include "mkgcn/affinity.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <string>

#include "mkgcn/error.hpp"
#include "mkgcn/graph_io.hpp"

namespace mkgcn {

BoolMatrix binarize_edges(const MetaElement& meta, EdgeRule rule) {
  if (!(meta.beta >= 0.0)) throw Error("beta of element '" + meta.name + "' must be non-negative");
  const auto n = static_cast<Index>(meta.values.size());
  const bool inclusive = rule == EdgeRule::match_at_zero && meta.beta == 0.0;
  BoolMatrix edges = BoolMatrix::Constant(n, n, false);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      // NaN (missing) fails both comparisons.
      const double gap = std::abs(meta.values[i] - meta.values[j]);
      const bool connected = inclusive ? gap <= meta.beta : gap < meta.beta;
      edges(i, j) = edges(j, i) = connected;
    }
  }
  return edges;
}

double feature_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, Distance distance) {
  if (distance == Distance::euclidean) return (a - b).norm();
  const Eigen::RowVectorXd ca = a.array() - a.mean();
  const Eigen::RowVectorXd cb = b.array() - b.mean();
  const double denom = ca.norm() * cb.norm();
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 1.0 - ca.dot(cb) / denom;
}

namespace {

void check_correlation_rows(const Matrix& x) {
  for (Index i = 0; i < x.rows(); ++i) {
    if ((x.row(i).array() == x(i, 0)).all())
      throw Error("feature row of node " + std::to_string(i) +
                  " is constant; correlation distance is undefined");
  }
}

}  // namespace

double mean_pairwise_distance(const Matrix& x, Distance distance) {
  if (x.rows() < 2) throw Error("mean pairwise distance needs at least two nodes");
  if (distance == Distance::correlation) check_correlation_rows(x);
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = i + 1; j < x.rows(); ++j) total += feature_distance(x.row(i), x.row(j), distance);
  const double pairs = 0.5 * static_cast<double>(x.rows()) * static_cast<double>(x.rows() - 1);
  return total / pairs;
}

Matrix similarity_weights(const Matrix& x, const SimilarityKernel& kernel) {
  if (x.rows() < 2) throw Error("similarity weights need at least two nodes");
  if (!(kernel.sigma > 0.0)) throw Error("kernel width sigma must be positive");
  if (kernel.distance == Distance::correlation) check_correlation_rows(x);
  const Index n = x.rows();
  const double denom = 2.0 * kernel.sigma * kernel.sigma;
  Matrix w = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double rho = feature_distance(x.row(i), x.row(j), kernel.distance);
      w(i, j) = w(j, i) = std::exp(-rho * rho / denom);
    }
  }
  return w;
}

Matrix fuse(const Matrix& weights, const BoolMatrix& edges) {
  if (weights.rows() != edges.rows() || weights.cols() != edges.cols() || weights.rows() != weights.cols())
    throw ShapeMismatch("weight and edge matrices must be the same square shape");
  Matrix a = (weights.array() * edges.cast<double>()).matrix();
  a.diagonal().setZero();
  return a;
}

Matrix mix_graphs(std::span<const Matrix> graphs) {
  if (graphs.empty()) throw Error("mix_graphs needs at least one graph");
  Matrix sum = graphs.front();
  for (std::size_t g = 1; g < graphs.size(); ++g) {
    if (graphs[g].rows() != sum.rows() || graphs[g].cols() != sum.cols())
      throw ShapeMismatch("graphs to mix have different node counts");
    sum += graphs[g];
  }
  return sum / static_cast<double>(graphs.size());
}

SymmetricMatrix build_affinity(std::span<const MetaElement> meta, const Matrix& x, const SimilarityKernel& kernel,
                               AffinityMode mode, EdgeRule rule, Storage storage) {
  if (meta.empty()) throw Error("affinity construction needs at least one meta element");
  for (const auto& element : meta)
    if (static_cast<Index>(element.values.size()) != x.rows())
      throw ShapeMismatch("meta element '" + element.name + "' has " + std::to_string(element.values.size()) +
                          " values for " + std::to_string(x.rows()) + " nodes");

  Matrix adjacency;
  switch (mode.kind) {
    case AffinityMode::Kind::single: {
      if (mode.index >= meta.size()) throw Error("meta element index out of range");
      adjacency = fuse(similarity_weights(x, kernel), binarize_edges(meta[mode.index], rule));
      break;
    }
    case AffinityMode::Kind::mixed: {
      const Matrix w = similarity_weights(x, kernel);
      std::vector<Matrix> graphs;
      for (const auto& element : meta) graphs.push_back(fuse(w, binarize_edges(element, rule)));
      adjacency = mix_graphs(graphs);
      break;
    }
    case AffinityMode::Kind::mixed_nosim: {
      std::vector<Matrix> graphs;
      for (const auto& element : meta) graphs.push_back(binarize_edges(element, rule).cast<double>().matrix());
      adjacency = mix_graphs(graphs);
      break;
    }
  }
  return SymmetricMatrix::from_dense(std::move(adjacency), storage);
}

std::vector<MetaElement> read_meta_csv(std::istream& in, const std::map<std::string, double>& betas) {
  std::string line;
  if (!std::getline(in, line)) throw Error("meta-data CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header.front() != "node")
    throw Error("meta-data CSV header must be 'node,<element1>,...'");

  std::vector<MetaElement> elements;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto it = betas.find(header[c]);
    if (it == betas.end()) throw ConfigError("no beta configured for meta element '" + header[c] + "'");
    elements.push_back({header[c], {}, it->second});
  }

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error("meta-data CSV row " + std::to_string(rows.size() + 1) + " has the wrong number of columns");
    rows.push_back(std::move(fields));
  }
  for (auto& element : elements) element.values.assign(rows.size(), std::numeric_limits<double>::quiet_NaN());

  std::vector<bool> filled(rows.size(), false);
  for (const auto& fields : rows) {
    std::size_t node = 0;
    try {
      std::size_t used = 0;
      const long v = std::stol(fields[0], &used);
      if (used != fields[0].size() || v < 0) throw std::invalid_argument("node");
      node = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw Error("column 'node': cannot parse '" + fields[0] + "'");
    }
    if (node >= rows.size() || filled[node]) throw Error("column 'node': bad or duplicate id " + fields[0]);
    filled[node] = true;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const std::string& cell = fields[c];
      if (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN") continue;
      try {
        std::size_t used = 0;
        elements[c - 1].values[node] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error("column '" + header[c] + "': cannot parse '" + cell + "'");
      }
    }
  }
  return elements;
}

}  // namespace mkgcn
