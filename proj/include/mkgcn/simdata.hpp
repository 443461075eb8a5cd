#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mkgcn/graph.hpp"

namespace mkgcn {

enum class FeatureMode {
  discriminative,  // features are the 2-D positions
  random,          // features ~ U[0,1]^2, independent of class
};

enum class EdgeWeighting {
  binary,      // weight 1 for every pair closer than beta
  similarity,  // exp(-d^2 / 2 sigma^2), sigma = mean pairwise distance
};

/// Two 2-D Gaussian clusters; class c has mean means[c] on both axes and
/// isotropic variance variances[c].
struct SimConfig {
  int n_per_class = 300;
  double means[2] = {-1.0, 1.0};
  double variances[2] = {0.5, 0.1};
  double beta = 0.5;
  FeatureMode feature_mode = FeatureMode::discriminative;
  EdgeWeighting weighting = EdgeWeighting::binary;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Sampled positions and the graph built from them. Nodes [0, n) belong to
/// class 0 and [n, 2n) to class 1. The train/test split is the first fold of
/// a stratified 10-fold partition (fewer folds for tiny classes).
struct SimDataset {
  Matrix positions;
  PopulationGraph graph;
};

SimDataset generate_with_positions(const SimConfig& config);
PopulationGraph generate(const SimConfig& config);

/// Connects node pairs whose Euclidean distance is strictly below beta.
SymmetricMatrix euclidean_threshold_graph(const Matrix& positions, double beta, EdgeWeighting weighting,
                                          Storage storage = Storage::automatic);

struct Fold {
  NodeMask train;
  NodeMask test;
};

/// Partitions nodes into k_folds test sets with per-class counts differing by
/// at most one between folds. Each fold's train mask is the complement of its
/// test mask. Throws if a class has fewer than k_folds members.
std::vector<Fold> stratified_folds(std::span<const int> labels, int k_folds, std::uint64_t seed);

/// Stratified selection of roughly `fraction` of the masked nodes, at least one
/// per class that has two or more masked members.
NodeMask stratified_subset(std::span<const int> labels, const NodeMask& mask, double fraction, std::uint64_t seed);

}  // namespace mkgcn
