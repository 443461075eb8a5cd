#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mkgcn/graph.hpp"

namespace mkgcn {

/// One non-imaging meta-data column. A NaN value marks a missing entry;
/// such nodes get no edges from this element.
struct MetaElement {
  std::string name;
  std::vector<double> values;
  double beta = 0.0;
};

enum class Distance { correlation, euclidean };

struct SimilarityKernel {
  double sigma = 1.0;
  Distance distance = Distance::correlation;
};

/// How the threshold comparison treats |eta_i - eta_j| == beta.
enum class EdgeRule {
  /// Strict '<' for beta > 0; exact-match ('<=') when beta == 0, which is how
  /// categorical elements connect.
  match_at_zero,
  /// Strict '<' everywhere (beta == 0 yields no edges).
  strict,
};

/// E_ij = 1 iff nodes i != j agree on the element within beta.
BoolMatrix binarize_edges(const MetaElement& meta, EdgeRule rule = EdgeRule::match_at_zero);

/// Distance between two feature rows; correlation distance is 1 - Pearson r.
double feature_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, Distance distance);

/// Mean distance over all unordered node pairs, the default kernel width.
double mean_pairwise_distance(const Matrix& x, Distance distance);

/// W_ij = exp(-rho(x_i, x_j)^2 / (2 sigma^2)) off the diagonal, 0 on it.
/// Under correlation distance a constant feature row is an error.
Matrix similarity_weights(const Matrix& x, const SimilarityKernel& kernel);

/// Hadamard product W o E with a zeroed diagonal.
Matrix fuse(const Matrix& weights, const BoolMatrix& edges);

/// Entrywise mean of equally-sized adjacencies.
Matrix mix_graphs(std::span<const Matrix> graphs);

struct AffinityMode {
  enum class Kind { single, mixed, mixed_nosim };
  Kind kind = Kind::mixed;
  std::size_t index = 0;  // meta element for Kind::single

  static AffinityMode single(std::size_t i) { return {Kind::single, i}; }
  static AffinityMode mixed() { return {Kind::mixed, 0}; }
  static AffinityMode mixed_nosim() { return {Kind::mixed_nosim, 0}; }
};

/// single(i): W o E_i;  mixed: mean_i W o E_i;  mixed_nosim: mean_i E_i.
SymmetricMatrix build_affinity(std::span<const MetaElement> meta, const Matrix& x, const SimilarityKernel& kernel,
                               AffinityMode mode, EdgeRule rule = EdgeRule::match_at_zero,
                               Storage storage = Storage::automatic);

/// Reads `node,<element1>,<element2>,...`. Empty, "NA" and "nan" cells are
/// missing. Betas are looked up by column name; a column without a beta is an
/// error.
std::vector<MetaElement> read_meta_csv(std::istream& in, const std::map<std::string, double>& betas);

}  // namespace mkgcn
