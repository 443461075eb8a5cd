#include "mkgcn/optim.hpp"

#include <cmath>

#include "mkgcn/error.hpp"

namespace mkgcn {

void check_finite(std::span<const ParameterRef> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw ShapeMismatch("gradient count does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].value->rows() || grads[i].cols() != params[i].value->cols())
      throw ShapeMismatch("gradient shape mismatch for '" + params[i].name + "'");
    if (!grads[i].allFinite()) throw NonFiniteGradient(params[i].name);
  }
}

void sgd_step(std::span<const ParameterRef> params, std::span<const Matrix> grads, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  check_finite(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].value -= lr * grads[i];
}

GradientDescent::GradientDescent(double lr) : lr_(lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void GradientDescent::step(Network& net, std::span<const Matrix> grads) {
  const auto params = net.parameters();
  sgd_step(params, grads, lr_);
}

Adam::Adam(double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void Adam::step(Network& net, std::span<const Matrix> grads) {
  const auto params = net.parameters();
  check_finite(params, grads);
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    const Matrix m_hat = m_[i] / c1;
    const Matrix v_hat = v_[i] / c2;
    *params[i].value -= (lr_ * m_hat.array() / (v_hat.array().sqrt() + epsilon_)).matrix();
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr) {
  if (kind == OptimizerKind::adam) return std::make_unique<Adam>(lr);
  return std::make_unique<GradientDescent>(lr);
}

}  // namespace mkgcn
