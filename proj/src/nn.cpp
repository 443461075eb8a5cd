#include "mkgcn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mkgcn/error.hpp"

namespace mkgcn {

// ---------------------------------------------------------------------------
// Structure

void ChebFilterLayer::validate() const {
  if (theta.empty()) throw ShapeMismatch("GC-layer needs at least one Theta slice");
  for (const auto& slice : theta) {
    if (slice.rows() != theta.front().rows() || slice.cols() != theta.front().cols())
      throw ShapeMismatch("Theta slices of a GC-layer must share one shape");
    if (!slice.allFinite()) throw InvariantViolation("GC-layer Theta has non-finite entries");
  }
  if (bias.rows() != 1 || bias.cols() != theta.front().cols())
    throw ShapeMismatch("GC-layer bias must be 1 x d_out");
}

Index InceptionModule::input_dim() const { return branches.front().input_dim(); }

Index InceptionModule::output_dim() const {
  if (aggregator == Aggregator::maxpool) return branches.front().output_dim();
  Index width = 0;
  for (const auto& b : branches) width += b.output_dim();
  return width;
}

void InceptionModule::validate() const {
  if (branches.empty()) throw ShapeMismatch("inception module needs at least one branch");
  for (const auto& b : branches) {
    b.validate();
    if (b.input_dim() != branches.front().input_dim())
      throw ShapeMismatch("inception branches must share d_in");
    if (aggregator == Aggregator::maxpool && b.output_dim() != branches.front().output_dim())
      throw ShapeMismatch("max-pool aggregation needs equal branch widths");
  }
}

Architecture make_architecture(Index input_dim, int num_classes, const std::vector<std::vector<int>>& module_orders,
                               Index width, Aggregator aggregator, Head head) {
  Architecture arch;
  arch.input_dim = input_dim;
  arch.num_classes = num_classes;
  arch.head = head;
  for (const auto& orders : module_orders) arch.modules.push_back({orders, width, aggregator, Activation::relu});
  if (head == Head::direct && !arch.modules.empty()) {
    arch.modules.back().width = num_classes;
    arch.modules.back().activation = Activation::none;
  }
  validate_architecture(arch);
  return arch;
}

void validate_architecture(const Architecture& arch) {
  if (arch.modules.empty()) throw ConfigError("architecture has no modules");
  if (arch.input_dim <= 0 || arch.num_classes <= 0) throw ConfigError("architecture needs input_dim and classes");
  Index d_out = 0;
  for (const auto& spec : arch.modules) {
    if (spec.orders.empty()) throw ConfigError("module without branches");
    if (spec.width <= 0) throw ConfigError("module width must be positive");
    for (int k : spec.orders)
      if (k < 0) throw ConfigError("polynomial order must be non-negative");
    d_out = spec.aggregator == Aggregator::concat ? spec.width * static_cast<Index>(spec.orders.size()) : spec.width;
  }
  if (arch.head == Head::direct && d_out != arch.num_classes)
    throw ConfigError("direct head needs the last module to emit one column per class");
}

Network::Network(std::vector<InceptionModule> modules, std::optional<DenseLayer> classifier)
    : modules_(std::move(modules)), classifier_(std::move(classifier)) {
  validate();
}

void Network::validate() const {
  if (modules_.empty()) throw ShapeMismatch("network needs at least one inception module");
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    modules_[m].validate();
    if (m > 0 && modules_[m].input_dim() != modules_[m - 1].output_dim())
      throw ShapeMismatch("module " + std::to_string(m) + " expects width " +
                          std::to_string(modules_[m].input_dim()) + " but receives " +
                          std::to_string(modules_[m - 1].output_dim()));
  }
  if (classifier_) {
    if (classifier_->weight.rows() != modules_.back().output_dim())
      throw ShapeMismatch("classifier input width does not match the last module");
    if (classifier_->bias.rows() != 1 || classifier_->bias.cols() != classifier_->weight.cols())
      throw ShapeMismatch("classifier bias must be 1 x C");
  }
}

Index Network::output_dim() const {
  return classifier_ ? classifier_->weight.cols() : modules_.back().output_dim();
}

namespace {

Matrix glorot(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace

Network Network::initialize(const Architecture& arch, std::uint64_t seed) {
  validate_architecture(arch);
  Rng rng(seed);
  std::vector<InceptionModule> modules;
  Index d_in = arch.input_dim;
  for (const auto& spec : arch.modules) {
    InceptionModule module;
    module.aggregator = spec.aggregator;
    for (int k : spec.orders) {
      ChebFilterLayer layer;
      for (int r = 0; r <= k; ++r) layer.theta.push_back(glorot(d_in, spec.width, rng));
      layer.bias = Matrix::Zero(1, spec.width);
      layer.activation = spec.activation;
      module.branches.push_back(std::move(layer));
    }
    d_in = module.output_dim();
    modules.push_back(std::move(module));
  }
  std::optional<DenseLayer> classifier;
  if (arch.head == Head::dense) {
    classifier = DenseLayer{glorot(d_in, arch.num_classes, rng), Matrix::Zero(1, arch.num_classes)};
  }
  return Network(std::move(modules), std::move(classifier));
}

Architecture Network::architecture() const {
  Architecture arch;
  arch.input_dim = input_dim();
  arch.num_classes = static_cast<int>(output_dim());
  arch.head = classifier_ ? Head::dense : Head::direct;
  for (const auto& module : modules_) {
    ModuleSpec spec;
    spec.aggregator = module.aggregator;
    spec.width = module.branches.front().output_dim();
    spec.activation = module.branches.front().activation;
    for (const auto& b : module.branches) spec.orders.push_back(b.order());
    arch.modules.push_back(std::move(spec));
  }
  return arch;
}

template <class Fn>
void Network::visit_parameters(Fn&& fn) const {
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    const auto& module = modules_[m];
    for (std::size_t s = 0; s < module.branches.size(); ++s) {
      const auto& layer = module.branches[s];
      const std::string prefix = "module" + std::to_string(m) + ".branch" + std::to_string(s) + ".";
      for (std::size_t r = 0; r < layer.theta.size(); ++r) fn(prefix + "theta" + std::to_string(r), layer.theta[r], false);
      fn(prefix + "bias", layer.bias, true);
    }
  }
  if (classifier_) {
    fn(std::string("classifier.weight"), classifier_->weight, false);
    fn(std::string("classifier.bias"), classifier_->bias, true);
  }
}

std::vector<ParameterRef> Network::parameters() {
  ++revision_;
  std::vector<ParameterRef> refs;
  // The visitor hands out const references into members of this non-const object.
  visit_parameters([&](std::string name, const Matrix& value, bool is_bias) {
    refs.push_back({std::move(name), const_cast<Matrix*>(&value), is_bias});
  });
  return refs;
}

std::vector<ConstParameterRef> Network::parameters() const {
  std::vector<ConstParameterRef> refs;
  visit_parameters([&](std::string name, const Matrix& value, bool is_bias) {
    refs.push_back({std::move(name), &value, is_bias});
  });
  return refs;
}

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  for (const auto& p : parameters()) count += static_cast<std::size_t>(p.value->size());
  return count;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

int max_order(const InceptionModule& module) {
  int k = 0;
  for (const auto& b : module.branches) k = std::max(k, b.order());
  return k;
}

Matrix pre_activation(const ChebFilterLayer& layer, const std::vector<Matrix>& basis) {
  Matrix z = basis[0] * layer.theta[0];
  for (int r = 1; r <= layer.order(); ++r) z.noalias() += basis[r] * layer.theta[r];
  z.rowwise() += layer.bias.row(0);
  return z;
}

Matrix activate(const Matrix& z, Activation act) {
  return act == Activation::relu ? Matrix(z.cwiseMax(0.0)) : z;
}

/// Merges branch outputs; fills argmax when max-pooling (ties go to the lowest branch).
Matrix aggregate(const InceptionModule& module, const std::vector<Matrix>& outputs, Eigen::MatrixXi* argmax) {
  if (module.aggregator == Aggregator::concat) {
    Matrix out(outputs.front().rows(), module.output_dim());
    Index col = 0;
    for (const auto& y : outputs) {
      out.middleCols(col, y.cols()) = y;
      col += y.cols();
    }
    return out;
  }
  Matrix out = outputs.front();
  Eigen::MatrixXi winner = Eigen::MatrixXi::Zero(out.rows(), out.cols());
  for (std::size_t s = 1; s < outputs.size(); ++s) {
    const Matrix& y = outputs[s];
    for (Index j = 0; j < out.cols(); ++j)
      for (Index i = 0; i < out.rows(); ++i)
        if (y(i, j) > out(i, j)) {
          out(i, j) = y(i, j);
          winner(i, j) = static_cast<int>(s);
        }
  }
  if (argmax) *argmax = std::move(winner);
  return out;
}

void check_input(const ScaledLaplacian& lap, const Matrix& h, Index d_in) {
  if (h.rows() != lap.matrix.size())
    throw ShapeMismatch("input has " + std::to_string(h.rows()) + " rows, graph has " +
                        std::to_string(lap.matrix.size()) + " nodes");
  if (h.cols() != d_in)
    throw ShapeMismatch("input has " + std::to_string(h.cols()) + " columns, layer expects " + std::to_string(d_in));
}

}  // namespace

Matrix gc_forward(const ChebFilterLayer& layer, const ScaledLaplacian& lap, const Matrix& h) {
  layer.validate();
  check_input(lap, h, layer.input_dim());
  return activate(pre_activation(layer, chebyshev_apply(lap, h, layer.order())), layer.activation);
}

Matrix inception_forward(const InceptionModule& module, const ScaledLaplacian& lap, const Matrix& h) {
  module.validate();
  check_input(lap, h, module.input_dim());
  const auto basis = chebyshev_apply(lap, h, max_order(module));
  std::vector<Matrix> outputs;
  for (const auto& b : module.branches) outputs.push_back(activate(pre_activation(b, basis), b.activation));
  return aggregate(module, outputs, nullptr);
}

ForwardResult network_forward(const Network& net, const ScaledLaplacian& lap, const Matrix& x,
                              const ForwardOptions& options) {
  check_input(lap, x, net.input_dim());
  const bool dropout = options.rng != nullptr && options.dropout > 0.0;
  if (dropout && options.dropout >= 1.0) throw ConfigError("dropout rate must be below 1");

  ForwardResult result;
  GradientTape& tape = result.tape;
  tape.network = &net;
  tape.laplacian = &lap;
  tape.revision = net.revision();

  Matrix h = x;
  for (const auto& module : net.modules()) {
    GradientTape::ModuleRecord record;
    if (dropout) {
      std::bernoulli_distribution keep(1.0 - options.dropout);
      record.dropout_scale.resize(h.rows(), h.cols());
      const double scale = 1.0 / (1.0 - options.dropout);
      for (Index j = 0; j < h.cols(); ++j)
        for (Index i = 0; i < h.rows(); ++i) record.dropout_scale(i, j) = keep(*options.rng) ? scale : 0.0;
      h = h.cwiseProduct(record.dropout_scale);
    }
    record.basis = chebyshev_apply(lap, h, max_order(module));
    std::vector<Matrix> outputs;
    for (const auto& branch : module.branches) {
      record.pre_activation.push_back(pre_activation(branch, record.basis));
      outputs.push_back(activate(record.pre_activation.back(), branch.activation));
    }
    h = aggregate(module, outputs, &record.argmax);
    tape.modules.push_back(std::move(record));
  }
  if (net.classifier()) {
    tape.classifier_input = h;
    result.scores = h * net.classifier()->weight;
    result.scores.rowwise() += net.classifier()->bias.row(0);
  } else {
    result.scores = std::move(h);
  }
  return result;
}

Matrix network_predict(const Network& net, const ScaledLaplacian& lap, const Matrix& x) {
  check_input(lap, x, net.input_dim());
  Matrix h = x;
  for (const auto& module : net.modules()) h = inception_forward(module, lap, h);
  if (!net.classifier()) return h;
  Matrix scores = h * net.classifier()->weight;
  scores.rowwise() += net.classifier()->bias.row(0);
  return scores;
}

// ---------------------------------------------------------------------------
// Loss

LossResult masked_cross_entropy(const Matrix& scores, std::span<const int> labels, const NodeMask& mask) {
  if (static_cast<Index>(labels.size()) != scores.rows() || mask.size() != labels.size())
    throw ShapeMismatch("scores, labels and mask must cover the same nodes");
  const auto selected = static_cast<double>(std::count(mask.begin(), mask.end(), true));
  if (selected == 0.0) throw Error("cross-entropy mask selects no nodes");

  LossResult result;
  result.gradient = Matrix::Zero(scores.rows(), scores.cols());
  double total = 0.0;
  for (Index i = 0; i < scores.rows(); ++i) {
    if (!mask[i]) continue;
    const int label = labels[i];
    if (label < 0 || label >= scores.cols()) throw InvariantViolation("label out of range at node " + std::to_string(i));
    const double top = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = scores.row(i).array() - top;
    const double log_norm = std::log(shifted.array().exp().sum());
    total += log_norm - shifted(label);
    Eigen::RowVectorXd prob = (shifted.array() - log_norm).exp();
    prob(label) -= 1.0;
    result.gradient.row(i) = prob / selected;
  }
  result.loss = total / selected;
  return result;
}

double masked_accuracy(const Matrix& scores, std::span<const int> labels, const NodeMask& mask) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (Index i = 0; i < scores.rows(); ++i) {
    if (!mask[i]) continue;
    Index best = 0;
    scores.row(i).maxCoeff(&best);
    ++total;
    correct += (best == labels[i]);
  }
  if (total == 0) throw Error("accuracy mask selects no nodes");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Backward

std::vector<Matrix> network_backward(const GradientTape& tape, const Matrix& score_gradient) {
  if (tape.network == nullptr || tape.laplacian == nullptr) throw StaleTape("tape was not produced by a forward pass");
  const Network& net = *tape.network;
  if (net.revision() != tape.revision) throw StaleTape("network parameters changed after the forward pass");
  if (score_gradient.rows() != tape.laplacian->matrix.size() || score_gradient.cols() != net.output_dim())
    throw ShapeMismatch("score gradient shape does not match the network output");

  // Gradients are produced back to front, then reordered to parameters() order.
  std::vector<std::vector<Matrix>> module_grads(net.modules().size());
  std::vector<Matrix> classifier_grads;

  Matrix g = score_gradient;
  if (net.classifier()) {
    const auto& head = *net.classifier();
    classifier_grads.push_back(tape.classifier_input.transpose() * g);
    classifier_grads.push_back(g.colwise().sum());
    g = g * head.weight.transpose();
  }

  for (std::size_t mi = net.modules().size(); mi-- > 0;) {
    const auto& module = net.modules()[mi];
    const auto& record = tape.modules[mi];
    const bool need_input_grad = mi > 0;
    const int k_max = static_cast<int>(record.basis.size()) - 1;
    std::vector<Matrix> input_coeffs;
    if (need_input_grad)
      input_coeffs.assign(static_cast<std::size_t>(k_max) + 1, Matrix::Zero(g.rows(), module.input_dim()));

    Index col = 0;
    for (std::size_t s = 0; s < module.branches.size(); ++s) {
      const auto& layer = module.branches[s];
      Matrix gz;
      if (module.aggregator == Aggregator::concat) {
        gz = g.middleCols(col, layer.output_dim());
        col += layer.output_dim();
      } else {
        gz = (record.argmax.array() == static_cast<int>(s)).select(g, 0.0);
      }
      if (layer.activation == Activation::relu)
        gz = (record.pre_activation[s].array() > 0.0).select(gz, 0.0);

      for (int r = 0; r <= layer.order(); ++r) {
        module_grads[mi].push_back(record.basis[r].transpose() * gz);
        if (need_input_grad) input_coeffs[r].noalias() += gz * layer.theta[r].transpose();
      }
      module_grads[mi].push_back(gz.colwise().sum());
    }
    if (need_input_grad) {
      g = chebyshev_sum(*tape.laplacian, input_coeffs);
      if (record.dropout_scale.size() > 0) g = g.cwiseProduct(record.dropout_scale);
    }
  }

  std::vector<Matrix> grads;
  for (auto& mg : module_grads)
    for (auto& m : mg) grads.push_back(std::move(m));
  for (auto& m : classifier_grads) grads.push_back(std::move(m));
  return grads;
}

}  // namespace mkgcn
