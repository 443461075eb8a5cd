#include "mkgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "mkgcn/error.hpp"

namespace mkgcn {

namespace {

Storage resolve(Storage storage, double density) {
  if (storage != Storage::automatic) return storage;
  return density < kSparseDensityThreshold ? Storage::sparse : Storage::dense;
}

double density_of(Index nnz, Index n) {
  return n == 0 ? 0.0 : static_cast<double>(nnz) / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace

// ---------------------------------------------------------------------------
// SymmetricMatrix

SymmetricMatrix SymmetricMatrix::from_dense(Matrix m, Storage storage) {
  if (m.rows() != m.cols()) throw ShapeMismatch("symmetric matrix must be square");
  SymmetricMatrix out;
  const Index nnz = (m.array() != 0.0).count();
  if (resolve(storage, density_of(nnz, m.rows())) == Storage::sparse) {
    SparseMatrix s = m.sparseView(1.0, 0.0);
    s.makeCompressed();
    out.data_ = std::move(s);
  } else {
    out.data_ = std::move(m);
  }
  return out;
}

SymmetricMatrix SymmetricMatrix::from_sparse(SparseMatrix m, Storage storage) {
  if (m.rows() != m.cols()) throw ShapeMismatch("symmetric matrix must be square");
  m.prune(0.0, 0.0);
  m.makeCompressed();
  SymmetricMatrix out;
  if (resolve(storage, density_of(m.nonZeros(), m.rows())) == Storage::sparse) {
    out.data_ = std::move(m);
  } else {
    out.data_ = Matrix(m);
  }
  return out;
}

SymmetricMatrix SymmetricMatrix::identity(Index n, Storage storage) {
  SparseMatrix s(n, n);
  s.setIdentity();
  return from_sparse(std::move(s), storage);
}

Index SymmetricMatrix::size() const noexcept {
  return std::visit([](const auto& m) { return m.rows(); }, data_);
}

Index SymmetricMatrix::nonzeros() const {
  Index count = 0;
  for_each_nonzero([&](Index, Index, double) { ++count; });
  return count;
}

double SymmetricMatrix::density() const { return density_of(nonzeros(), size()); }

double SymmetricMatrix::coeff(Index i, Index j) const {
  return std::visit([&](const auto& m) { return m.coeff(i, j); }, data_);
}

Matrix SymmetricMatrix::multiply(const Matrix& x) const {
  if (x.rows() != size())
    throw ShapeMismatch("operator is " + std::to_string(size()) + "x" + std::to_string(size()) +
                        " but right-hand side has " + std::to_string(x.rows()) + " rows");
  return std::visit([&](const auto& m) -> Matrix { return m * x; }, data_);
}

Matrix SymmetricMatrix::to_dense() const {
  return std::visit([](const auto& m) -> Matrix { return Matrix(m); }, data_);
}

SparseMatrix SymmetricMatrix::to_sparse() const {
  if (const auto* s = std::get_if<SparseMatrix>(&data_)) return *s;
  SparseMatrix s = std::get<Matrix>(data_).sparseView(1.0, 0.0);
  s.makeCompressed();
  return s;
}

SymmetricMatrix SymmetricMatrix::with_storage(Storage storage) const {
  if (is_sparse()) return from_sparse(std::get<SparseMatrix>(data_), storage);
  return from_dense(std::get<Matrix>(data_), storage);
}

// ---------------------------------------------------------------------------
// PopulationGraph

void validate_adjacency(const SymmetricMatrix& adjacency) {
  adjacency.for_each_nonzero([&](Index i, Index j, double v) {
    if (!std::isfinite(v))
      throw InvariantViolation("adjacency entry (" + std::to_string(i) + "," + std::to_string(j) +
                               ") is not finite");
    if (v < 0.0)
      throw InvariantViolation("adjacency entry (" + std::to_string(i) + "," + std::to_string(j) +
                               ") is negative");
    if (i == j) throw InvariantViolation("adjacency has a nonzero diagonal at node " + std::to_string(i));
    if (adjacency.coeff(j, i) != v)
      throw InvariantViolation("adjacency is not symmetric at (" + std::to_string(i) + "," +
                               std::to_string(j) + ")");
  });
}

PopulationGraph::PopulationGraph(SymmetricMatrix adjacency, Matrix features, std::vector<int> labels,
                                 NodeMask train_mask, NodeMask test_mask, int num_classes) {
  const Index n = adjacency.size();
  if (n <= 0) throw InvariantViolation("population graph needs at least one node");
  validate_adjacency(adjacency);
  if (features.rows() != n)
    throw ShapeMismatch("feature matrix has " + std::to_string(features.rows()) + " rows for " +
                        std::to_string(n) + " nodes");
  if (static_cast<Index>(labels.size()) != n) throw ShapeMismatch("label vector length differs from node count");

  const int max_label = labels.empty() ? -1 : *std::max_element(labels.begin(), labels.end());
  if (num_classes <= 0) num_classes = max_label + 1;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw InvariantViolation("label of node " + std::to_string(i) + " is outside [0, " +
                               std::to_string(num_classes) + ")");

  adjacency_ = std::make_shared<const SymmetricMatrix>(std::move(adjacency));
  features_ = std::make_shared<const Matrix>(std::move(features));
  labels_ = std::make_shared<const std::vector<int>>(std::move(labels));
  train_mask_ = std::move(train_mask);
  test_mask_ = std::move(test_mask);
  num_classes_ = num_classes;
  validate_masks();
}

void PopulationGraph::validate_masks() const {
  const auto n = static_cast<std::size_t>(n_nodes());
  if (train_mask_.size() != n || test_mask_.size() != n)
    throw ShapeMismatch("train/test masks must have one entry per node");
  for (std::size_t i = 0; i < n; ++i)
    if (train_mask_[i] && test_mask_[i])
      throw InvariantViolation("node " + std::to_string(i) + " is in both train and test masks");
}

std::size_t PopulationGraph::edge_count() const {
  std::size_t count = 0;
  adjacency_->for_each_nonzero([&](Index i, Index j, double) { count += (i < j); });
  return count;
}

PopulationGraph PopulationGraph::with_masks(NodeMask train_mask, NodeMask test_mask) const {
  PopulationGraph out;
  out.adjacency_ = adjacency_;
  out.features_ = features_;
  out.labels_ = labels_;
  out.num_classes_ = num_classes_;
  out.train_mask_ = std::move(train_mask);
  out.test_mask_ = std::move(test_mask);
  out.validate_masks();
  return out;
}

// ---------------------------------------------------------------------------
// Laplacian

NormalizedLaplacian build_laplacian(const SymmetricMatrix& adjacency, Storage storage) {
  validate_adjacency(adjacency);
  const Index n = adjacency.size();
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
  adjacency.for_each_nonzero([&](Index i, Index, double v) { degree(i) += v; });
  Eigen::VectorXd inv_sqrt(n);
  for (Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0);
  adjacency.for_each_nonzero([&](Index i, Index j, double v) {
    triplets.emplace_back(i, j, -v * (inv_sqrt(i) * inv_sqrt(j)));
  });
  SparseMatrix lap(n, n);
  lap.setFromTriplets(triplets.begin(), triplets.end());
  if (storage == Storage::automatic) storage = adjacency.is_sparse() ? Storage::sparse : Storage::dense;
  return {SymmetricMatrix::from_sparse(std::move(lap), storage), 2.0};
}

NormalizedLaplacian build_laplacian(const PopulationGraph& graph, Storage storage) {
  return build_laplacian(graph.adjacency(), storage);
}

double estimate_lambda_max(const NormalizedLaplacian& lap, int iterations) {
  const Index n = lap.matrix.size();
  if (n == 0) return 0.0;
  Matrix v(n, 1);
  for (Index i = 0; i < n; ++i) v(i, 0) = 1.0 + 0.5 * std::sin(static_cast<double>(i) + 1.0);
  v /= v.norm();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Matrix w = lap.matrix.multiply(v);
    lambda = v.col(0).dot(w.col(0));
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
  }
  return lambda;
}

ScaledLaplacian rescale_laplacian(const NormalizedLaplacian& lap) {
  if (!(lap.lambda_max > 0.0)) throw Error("lambda_max must be positive to rescale the Laplacian");
  const Index n = lap.matrix.size();
  const Storage storage = lap.matrix.is_sparse() ? Storage::sparse : Storage::dense;
  if (lap.matrix.is_sparse()) {
    SparseMatrix id(n, n);
    id.setIdentity();
    SparseMatrix scaled = (2.0 / lap.lambda_max) * lap.matrix.to_sparse() - id;
    return {SymmetricMatrix::from_sparse(std::move(scaled), storage)};
  }
  Matrix scaled = (2.0 / lap.lambda_max) * lap.matrix.to_dense() - Matrix::Identity(n, n);
  return {SymmetricMatrix::from_dense(std::move(scaled), storage)};
}

std::vector<Matrix> chebyshev_apply(const ScaledLaplacian& lap, const Matrix& x, int k) {
  if (k < 0) throw Error("Chebyshev order must be non-negative");
  if (x.rows() != lap.matrix.size())
    throw ShapeMismatch("signal has " + std::to_string(x.rows()) + " rows, graph has " +
                        std::to_string(lap.matrix.size()) + " nodes");
  std::vector<Matrix> basis;
  basis.reserve(static_cast<std::size_t>(k) + 1);
  basis.push_back(x);
  if (k >= 1) basis.push_back(lap.matrix.multiply(x));
  for (int r = 2; r <= k; ++r) {
    Matrix next = 2.0 * lap.matrix.multiply(basis[r - 1]) - basis[r - 2];
    basis.push_back(std::move(next));
  }
  return basis;
}

Matrix chebyshev_sum(const ScaledLaplacian& lap, std::span<const Matrix> coeffs) {
  if (coeffs.empty()) throw Error("chebyshev_sum needs at least one coefficient");
  const auto k = static_cast<int>(coeffs.size()) - 1;
  if (k == 0) return coeffs[0];
  // b_r = C_r + 2 L~ b_{r+1} - b_{r+2};  result = C_0 + L~ b_1 - b_2
  Matrix b_next2 = Matrix::Zero(coeffs[0].rows(), coeffs[0].cols());
  Matrix b_next1 = coeffs[k];
  for (int r = k - 1; r >= 1; --r) {
    Matrix b = coeffs[r] + 2.0 * lap.matrix.multiply(b_next1) - b_next2;
    b_next2 = std::move(b_next1);
    b_next1 = std::move(b);
  }
  return coeffs[0] + lap.matrix.multiply(b_next1) - b_next2;
}

BoolMatrix khop_reach(const NormalizedLaplacian& lap, int k) {
  if (k < 0) throw Error("hop count must be non-negative");
  const Index n = lap.matrix.size();
  // Support of L^t grows as R_{t+1} = R_t | (R_t * P) where P is the edge pattern.
  Eigen::MatrixXi pattern = Eigen::MatrixXi::Zero(n, n);
  lap.matrix.for_each_nonzero([&](Index i, Index j, double) {
    if (i != j) pattern(i, j) = 1;
  });
  Eigen::MatrixXi reach = Eigen::MatrixXi::Identity(n, n);
  for (int t = 0; t < k; ++t) {
    Eigen::MatrixXi grown = reach * pattern + reach;
    Eigen::MatrixXi next = (grown.array() > 0).cast<int>().matrix();
    if (next == reach) break;
    reach = std::move(next);
  }
  return reach.array() > 0;
}

std::vector<int> connected_components(const SymmetricMatrix& adjacency) {
  const Index n = adjacency.size();
  std::vector<std::vector<Index>> neighbours(static_cast<std::size_t>(n));
  adjacency.for_each_nonzero([&](Index i, Index j, double) { neighbours[i].push_back(j); });
  std::vector<int> component(static_cast<std::size_t>(n), -1);
  int next_id = 0;
  for (Index start = 0; start < n; ++start) {
    if (component[start] >= 0) continue;
    std::deque<Index> queue{start};
    component[start] = next_id;
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop_front();
      for (Index v : neighbours[u])
        if (component[v] < 0) {
          component[v] = next_id;
          queue.push_back(v);
        }
    }
    ++next_id;
  }
  return component;
}

}  // namespace mkgcn
