#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mkgcn/graph.hpp"
#include "mkgcn/rng.hpp"

namespace mkgcn {

enum class Activation { relu, none };
enum class Aggregator { concat, maxpool };

/// How class scores are produced: a graph-free dense map after the last
/// module, or the last module's branches emitting one column per class.
enum class Head { dense, direct };

/// One spectral GC-layer: act( sum_{r=0}^{k} T_r(L~) H Theta_r + b ).
struct ChebFilterLayer {
  std::vector<Matrix> theta;  // k+1 slices, each d_in x d_out
  Matrix bias;                // 1 x d_out
  Activation activation = Activation::relu;

  int order() const noexcept { return static_cast<int>(theta.size()) - 1; }
  Index input_dim() const noexcept { return theta.empty() ? 0 : theta.front().rows(); }
  Index output_dim() const noexcept { return bias.cols(); }
  void validate() const;
};

/// Parallel branches of differing order merged by an aggregator.
struct InceptionModule {
  std::vector<ChebFilterLayer> branches;
  Aggregator aggregator = Aggregator::concat;

  Index input_dim() const;
  Index output_dim() const;
  void validate() const;
};

struct DenseLayer {
  Matrix weight;  // d_in x C
  Matrix bias;    // 1 x C
};

struct ModuleSpec {
  std::vector<int> orders;
  Index width = 16;  // per branch
  Aggregator aggregator = Aggregator::concat;
  Activation activation = Activation::relu;
};

struct Architecture {
  Index input_dim = 0;
  int num_classes = 0;
  std::vector<ModuleSpec> modules;
  Head head = Head::dense;
};

/// Builds a descriptor from per-module order lists. Under Head::direct the
/// last module's branches are given width num_classes and no activation.
Architecture make_architecture(Index input_dim, int num_classes, const std::vector<std::vector<int>>& module_orders,
                               Index width, Aggregator aggregator, Head head = Head::dense);

/// Throws ConfigError for empty modules, negative orders, or a direct head
/// whose last module does not emit exactly num_classes columns.
void validate_architecture(const Architecture& arch);

struct ParameterRef {
  std::string name;
  Matrix* value;
  bool is_bias;
};

struct ConstParameterRef {
  std::string name;
  const Matrix* value;
  bool is_bias;
};

class Network {
 public:
  Network(std::vector<InceptionModule> modules, std::optional<DenseLayer> classifier);

  /// Glorot-uniform weights per Theta_r slice, zero biases.
  static Network initialize(const Architecture& arch, std::uint64_t seed);

  const std::vector<InceptionModule>& modules() const noexcept { return modules_; }
  const std::optional<DenseLayer>& classifier() const noexcept { return classifier_; }
  Index input_dim() const { return modules_.front().input_dim(); }
  Index output_dim() const;
  Architecture architecture() const;

  /// Mutable views in canonical order (module, branch, theta_0..k, bias,
  /// then classifier). Taking them invalidates outstanding tapes.
  std::vector<ParameterRef> parameters();
  std::vector<ConstParameterRef> parameters() const;
  std::size_t parameter_count() const;

  std::uint64_t revision() const noexcept { return revision_; }

 private:
  void validate() const;
  template <class Fn>
  void visit_parameters(Fn&& fn) const;

  std::vector<InceptionModule> modules_;
  std::optional<DenseLayer> classifier_;
  std::uint64_t revision_ = 0;
};

/// Everything backward needs from one forward pass. References the network
/// and Laplacian it was produced with; both must outlive it.
struct GradientTape {
  struct ModuleRecord {
    Matrix dropout_scale;                // empty when dropout was off
    std::vector<Matrix> basis;           // T_r(L~) H for r = 0..max branch order
    std::vector<Matrix> pre_activation;  // per branch
    Eigen::MatrixXi argmax;              // max-pool winner per entry
  };

  const Network* network = nullptr;
  const ScaledLaplacian* laplacian = nullptr;
  std::uint64_t revision = 0;
  std::vector<ModuleRecord> modules;
  Matrix classifier_input;
};

struct ForwardOptions {
  double dropout = 0.0;  // applied to every module input when rng is set
  Rng* rng = nullptr;
};

struct ForwardResult {
  Matrix scores;
  GradientTape tape;
};

Matrix gc_forward(const ChebFilterLayer& layer, const ScaledLaplacian& lap, const Matrix& h);
Matrix inception_forward(const InceptionModule& module, const ScaledLaplacian& lap, const Matrix& h);
ForwardResult network_forward(const Network& net, const ScaledLaplacian& lap, const Matrix& x,
                              const ForwardOptions& options = {});

/// Inference-only forward pass (no tape, no dropout).
Matrix network_predict(const Network& net, const ScaledLaplacian& lap, const Matrix& x);

struct LossResult {
  double loss = 0.0;
  Matrix gradient;  // d loss / d scores
};

/// Mean over masked nodes of -log softmax(scores)[label]. Gradient rows are
/// zero outside the mask.
LossResult masked_cross_entropy(const Matrix& scores, std::span<const int> labels, const NodeMask& mask);

/// Gradients aligned with Network::parameters(). Throws StaleTape if the
/// network changed since the forward pass.
std::vector<Matrix> network_backward(const GradientTape& tape, const Matrix& score_gradient);

/// Percentage of masked nodes whose argmax score equals the label.
double masked_accuracy(const Matrix& scores, std::span<const int> labels, const NodeMask& mask);

}  // namespace mkgcn
