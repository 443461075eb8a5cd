#include "mkgcn/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mkgcn/error.hpp"
#include "mkgcn/rng.hpp"

namespace mkgcn {

void SimConfig::validate() const {
  if (n_per_class < 1) throw ConfigError("n_per_class must be at least 1");
  if (!(variances[0] > 0.0) || !(variances[1] > 0.0)) throw ConfigError("cluster variances must be positive");
  // beta == 0 is accepted and yields an edgeless graph.
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
}

SymmetricMatrix euclidean_threshold_graph(const Matrix& positions, double beta, EdgeWeighting weighting,
                                          Storage storage) {
  const Index n = positions.rows();
  double sigma = 1.0;
  if (weighting == EdgeWeighting::similarity && n >= 2) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) total += (positions.row(i) - positions.row(j)).norm();
    sigma = total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
  }
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = (positions.row(i) - positions.row(j)).norm();
      if (!(d < beta)) continue;
      const double w = weighting == EdgeWeighting::binary ? 1.0 : std::exp(-d * d / (2.0 * sigma * sigma));
      triplets.emplace_back(i, j, w);
      triplets.emplace_back(j, i, w);
    }
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());
  return SymmetricMatrix::from_sparse(std::move(a), storage);
}

SimDataset generate_with_positions(const SimConfig& config) {
  config.validate();
  const Index per_class = config.n_per_class;
  const Index n = 2 * per_class;
  Rng position_rng(derive_seed(config.seed, {0}));
  Matrix positions(n, 2);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int c = 0; c < 2; ++c) {
    std::normal_distribution<double> dist(config.means[c], std::sqrt(config.variances[c]));
    for (Index i = c * per_class; i < (c + 1) * per_class; ++i) {
      positions(i, 0) = dist(position_rng);
      positions(i, 1) = dist(position_rng);
      labels[i] = c;
    }
  }

  Matrix features = positions;
  if (config.feature_mode == FeatureMode::random) {
    Rng feature_rng(derive_seed(config.seed, {1}));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
      features(i, 0) = uniform(feature_rng);
      features(i, 1) = uniform(feature_rng);
    }
  }

  NodeMask train(static_cast<std::size_t>(n), true);
  NodeMask test(static_cast<std::size_t>(n), false);
  const int folds = std::min(10, config.n_per_class);
  if (folds >= 2) {
    auto split = stratified_folds(labels, folds, derive_seed(config.seed, {2}));
    train = std::move(split.front().train);
    test = std::move(split.front().test);
  }

  SymmetricMatrix adjacency = euclidean_threshold_graph(positions, config.beta, config.weighting);
  PopulationGraph graph(std::move(adjacency), std::move(features), std::move(labels), std::move(train),
                        std::move(test), 2);
  return {std::move(positions), std::move(graph)};
}

PopulationGraph generate(const SimConfig& config) { return generate_with_positions(config).graph; }

namespace {

std::map<int, std::vector<std::size_t>> members_by_class(std::span<const int> labels, const NodeMask* mask) {
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (mask == nullptr || (*mask)[i]) members[labels[i]].push_back(i);
  return members;
}

}  // namespace

std::vector<Fold> stratified_folds(std::span<const int> labels, int k_folds, std::uint64_t seed) {
  if (k_folds < 2) throw ConfigError("stratified k-fold needs at least 2 folds");
  auto members = members_by_class(labels, nullptr);
  for (const auto& [label, nodes] : members)
    if (static_cast<int>(nodes.size()) < k_folds)
      throw Error("class " + std::to_string(label) + " has " + std::to_string(nodes.size()) +
                  " members, fewer than " + std::to_string(k_folds) + " folds");

  Rng rng(seed);
  std::vector<Fold> folds(static_cast<std::size_t>(k_folds));
  for (auto& f : folds) {
    f.train.assign(labels.size(), true);
    f.test.assign(labels.size(), false);
  }
  // Dealing the concatenated, per-class shuffled node lists round robin gives
  // every fold floor or ceil of each class count.
  std::size_t position = 0;
  for (auto& [label, nodes] : members) {
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (std::size_t node : nodes) {
      auto& fold = folds[position % static_cast<std::size_t>(k_folds)];
      fold.test[node] = true;
      fold.train[node] = false;
      ++position;
    }
  }
  return folds;
}

NodeMask stratified_subset(std::span<const int> labels, const NodeMask& mask, double fraction, std::uint64_t seed) {
  NodeMask subset(labels.size(), false);
  if (fraction <= 0.0) return subset;
  Rng rng(seed);
  for (auto& [label, nodes] : members_by_class(labels, &mask)) {
    if (nodes.size() < 2) continue;
    std::shuffle(nodes.begin(), nodes.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(nodes.size())));
    take = std::clamp<std::size_t>(take, 1, nodes.size() - 1);
    for (std::size_t i = 0; i < take; ++i) subset[nodes[i]] = true;
  }
  return subset;
}

}  // namespace mkgcn
