#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mkgcn/nn.hpp"

namespace mkgcn {

/// p <- p - lr * g for every parameter. All gradients are checked for
/// finiteness before any parameter moves; the first offender is named in the
/// thrown NonFiniteGradient.
void sgd_step(std::span<const ParameterRef> params, std::span<const Matrix> grads, double lr);

void check_finite(std::span<const ParameterRef> params, std::span<const Matrix> grads);

enum class OptimizerKind { gradient_descent, adam };

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(Network& net, std::span<const Matrix> grads) = 0;
};

class GradientDescent final : public Optimizer {
 public:
  explicit GradientDescent(double lr);
  void step(Network& net, std::span<const Matrix> grads) override;

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(Network& net, std::span<const Matrix> grads) override;

 private:
  double lr_, beta1_, beta2_, epsilon_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr);

}  // namespace mkgcn
