#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace mkgcn {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using NodeMask = std::vector<bool>;

enum class Storage { automatic, dense, sparse };

/// Graphs denser than this are stored dense under Storage::automatic.
inline constexpr double kSparseDensityThreshold = 0.25;

/// Square symmetric operator held either as a dense matrix or as row-major CSR.
/// Both representations must give the same products up to reassociation.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;

  static SymmetricMatrix from_dense(Matrix m, Storage storage = Storage::automatic);
  static SymmetricMatrix from_sparse(SparseMatrix m, Storage storage = Storage::automatic);
  static SymmetricMatrix identity(Index n, Storage storage = Storage::automatic);

  Index size() const noexcept;
  bool is_sparse() const noexcept { return std::holds_alternative<SparseMatrix>(data_); }
  /// Number of exactly-nonzero entries.
  Index nonzeros() const;
  double density() const;

  double coeff(Index i, Index j) const;
  Matrix multiply(const Matrix& x) const;
  Matrix to_dense() const;
  SparseMatrix to_sparse() const;
  SymmetricMatrix with_storage(Storage storage) const;

  /// Calls fn(i, j, value) for each stored nonzero, row by row.
  template <class Fn>
  void for_each_nonzero(Fn&& fn) const {
    if (const auto* s = std::get_if<SparseMatrix>(&data_)) {
      for (Index i = 0; i < s->outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(*s, i); it; ++it)
          if (it.value() != 0.0) fn(i, it.col(), it.value());
    } else {
      const auto& d = std::get<Matrix>(data_);
      for (Index i = 0; i < d.rows(); ++i)
        for (Index j = 0; j < d.cols(); ++j)
          if (d(i, j) != 0.0) fn(i, j, d(i, j));
    }
  }

 private:
  std::variant<Matrix, SparseMatrix> data_;
};

/// Population graph: N nodes with a symmetric, non-negative, zero-diagonal
/// adjacency, an N x d feature matrix, per-node class labels and disjoint
/// train/test masks. Immutable; copies share the underlying storage.
class PopulationGraph {
 public:
  PopulationGraph(SymmetricMatrix adjacency, Matrix features, std::vector<int> labels,
                  NodeMask train_mask, NodeMask test_mask, int num_classes = 0);

  Index n_nodes() const noexcept { return adjacency_->size(); }
  Index feature_dim() const noexcept { return features_->cols(); }
  int num_classes() const noexcept { return num_classes_; }

  const SymmetricMatrix& adjacency() const noexcept { return *adjacency_; }
  const Matrix& features() const noexcept { return *features_; }
  const std::vector<int>& labels() const noexcept { return *labels_; }
  const NodeMask& train_mask() const noexcept { return train_mask_; }
  const NodeMask& test_mask() const noexcept { return test_mask_; }

  /// Number of undirected edges (i < j with A_ij != 0).
  std::size_t edge_count() const;

  PopulationGraph with_masks(NodeMask train_mask, NodeMask test_mask) const;

 private:
  PopulationGraph() = default;
  void validate_masks() const;

  std::shared_ptr<const SymmetricMatrix> adjacency_;
  std::shared_ptr<const Matrix> features_;
  std::shared_ptr<const std::vector<int>> labels_;
  NodeMask train_mask_;
  NodeMask test_mask_;
  int num_classes_ = 0;
};

/// Throws InvariantViolation unless the adjacency is square, exactly symmetric,
/// finite, non-negative, with a zero diagonal.
void validate_adjacency(const SymmetricMatrix& adjacency);

struct NormalizedLaplacian {
  SymmetricMatrix matrix;
  double lambda_max = 2.0;
};

/// Laplacian mapped onto [-1, 1] for the Chebyshev recurrence.
struct ScaledLaplacian {
  SymmetricMatrix matrix;
};

/// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes get an identity row.
NormalizedLaplacian build_laplacian(const SymmetricMatrix& adjacency, Storage storage = Storage::automatic);
NormalizedLaplacian build_laplacian(const PopulationGraph& graph, Storage storage = Storage::automatic);

/// Power-iteration estimate of the largest eigenvalue of L.
double estimate_lambda_max(const NormalizedLaplacian& lap, int iterations = 200);

/// 2L/lambda_max - I. Throws Error if lambda_max <= 0.
ScaledLaplacian rescale_laplacian(const NormalizedLaplacian& lap);

/// [T_0(L~)X, ..., T_k(L~)X] by the three-term recurrence (k products, no matrix powers).
std::vector<Matrix> chebyshev_apply(const ScaledLaplacian& lap, const Matrix& x, int k);

/// sum_r T_r(L~) C_r by Clenshaw's recurrence; coeffs.size() - 1 products.
Matrix chebyshev_sum(const ScaledLaplacian& lap, std::span<const Matrix> coeffs);

/// (i, j) is true iff the hop distance between i and j over the off-diagonal
/// support of the Laplacian is at most k.
BoolMatrix khop_reach(const NormalizedLaplacian& lap, int k);

/// Component id per node, numbered in order of first appearance.
std::vector<int> connected_components(const SymmetricMatrix& adjacency);

}  // namespace mkgcn
