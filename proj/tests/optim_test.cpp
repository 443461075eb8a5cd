#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "mkgcn/checkpoint.hpp"
#include "mkgcn/error.hpp"
#include "mkgcn/experiments.hpp"
#include "mkgcn/optim.hpp"
#include "test_util.hpp"

namespace mkgcn {
namespace {

TEST(SgdStep, ZeroGradientLeavesParameters) {
  Matrix p = Matrix::Constant(2, 2, 3.0);
  const std::vector<ParameterRef> params{{"p", &p, false}};
  const std::vector<Matrix> grads{Matrix::Zero(2, 2)};
  sgd_step(params, grads, 0.2);
  EXPECT_EQ(p, Matrix::Constant(2, 2, 3.0));
}

TEST(SgdStep, SingleScalarStep) {
  Matrix p = Matrix::Constant(1, 1, 1.0);
  const std::vector<ParameterRef> params{{"p", &p, false}};
  const std::vector<Matrix> grads{Matrix::Constant(1, 1, 1.0)};
  sgd_step(params, grads, 0.2);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.8);
}

TEST(SgdStep, QuadraticDescentMatchesClosedForm) {
  // f(p) = a/2 (p - c)^2 so p_t - c = (1 - lr a)^t (p_0 - c).
  const double a = 1.5, c = -0.4, lr = 0.2, p0 = 2.0;
  Matrix p = Matrix::Constant(1, 1, p0);
  const std::vector<ParameterRef> params{{"p", &p, false}};
  for (int t = 1; t <= 5; ++t) {
    const std::vector<Matrix> grads{Matrix::Constant(1, 1, a * (p(0, 0) - c))};
    sgd_step(params, grads, lr);
    EXPECT_NEAR(p(0, 0), c + std::pow(1 - lr * a, t) * (p0 - c), 1e-15) << "step " << t;
  }
  // Hand-unrolled: 1 - 0.3 = 0.7, 0.7^5 = 0.16807, 2.4 * 0.16807 - 0.4.
  EXPECT_NEAR(p(0, 0), 0.003368, 1e-12);
}

TEST(SgdStep, NonFiniteGradientNamesParameterAndMovesNothing) {
  Matrix a = Matrix::Ones(2, 2), b = Matrix::Ones(1, 3);
  const std::vector<ParameterRef> params{{"module0.branch0.theta0", &a, false}, {"module0.branch0.bias", &b, true}};
  std::vector<Matrix> grads{Matrix::Ones(2, 2), Matrix::Ones(1, 3)};
  grads[1](0, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    sgd_step(params, grads, 0.2);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter(), "module0.branch0.bias");
    EXPECT_NE(std::string(e.what()).find("module0.branch0.bias"), std::string::npos);
  }
  EXPECT_EQ(a, Matrix::Ones(2, 2));
  grads[1](0, 2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sgd_step(params, grads, 0.2), NonFiniteGradient);
}

TEST(SgdStep, RejectsBadArguments) {
  Matrix p = Matrix::Ones(1, 1);
  const std::vector<ParameterRef> params{{"p", &p, false}};
  EXPECT_THROW(sgd_step(params, std::vector<Matrix>{Matrix::Ones(1, 1)}, 0.0), ConfigError);
  EXPECT_THROW(sgd_step(params, std::vector<Matrix>{Matrix::Ones(2, 1)}, 0.1), ShapeMismatch);
  EXPECT_THROW(sgd_step(params, std::vector<Matrix>{}, 0.1), ShapeMismatch);
}

TEST(Optimizer, GradientDescentStepsEveryParameter) {
  auto net = Network::initialize(make_architecture(2, 2, {{1}}, 3, Aggregator::concat), 1);
  const auto before = Network(net.modules(), net.classifier());
  std::vector<Matrix> grads;
  for (const auto& p : std::as_const(net).parameters()) grads.push_back(Matrix::Ones(p.value->rows(), p.value->cols()));
  make_optimizer(OptimizerKind::gradient_descent, 0.5)->step(net, grads);
  const auto after = std::as_const(net).parameters();
  const auto orig = before.parameters();
  for (std::size_t i = 0; i < after.size(); ++i)
    EXPECT_LT(((*after[i].value).array() - ((*orig[i].value).array() - 0.5)).abs().maxCoeff(), 1e-15) << after[i].name;
}

TEST(Optimizer, AdamFirstStepIsSignedLearningRate) {
  // With bias correction the first Adam step is lr * g / (|g| + eps).
  auto net = Network::initialize(make_architecture(2, 2, {{0}}, 2, Aggregator::concat), 2);
  const auto before = Network(net.modules(), net.classifier());
  std::vector<Matrix> grads;
  for (const auto& p : std::as_const(net).parameters()) grads.push_back(Matrix::Constant(p.value->rows(), p.value->cols(), -3.0));
  Adam adam(0.01);
  adam.step(net, grads);
  const auto after = std::as_const(net).parameters();
  const auto orig = before.parameters();
  for (std::size_t i = 0; i < after.size(); ++i)
    EXPECT_LT((((*after[i].value) - (*orig[i].value)).array() - 0.01).abs().maxCoeff(), 1e-9);
}

TEST(Optimizer, AdamMinimizesQuadratic) {
  auto net = Network::initialize(make_architecture(1, 1, {{0}}, 1, Aggregator::concat, Head::direct), 3);
  Adam adam(0.05);
  for (int t = 0; t < 2000; ++t) {
    std::vector<Matrix> grads;
    for (const auto& p : std::as_const(net).parameters()) grads.push_back((2.0 * (*p.value).array() - 1.0).matrix());
    adam.step(net, grads);
  }
  for (const auto& p : std::as_const(net).parameters()) EXPECT_NEAR((*p.value)(0, 0), 0.5, 1e-3);
}

TEST(Checkpoint, RoundTripReproducesLoss) {
  Rng rng(4);
  const Matrix a = testing::random_adjacency(20, 0.25, rng);
  const auto lap = rescale_laplacian(build_laplacian(SymmetricMatrix::from_dense(a)));
  const Matrix x = testing::random_matrix(20, 3, rng);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[i] = i % 3;
  const NodeMask mask(20, true);
  for (auto head : {Head::dense, Head::direct}) {
    const auto arch = make_architecture(3, 3, {{1, 4}, {2, 6}}, 3, Aggregator::maxpool, head);
    auto net = Network::initialize(arch, 8);
    for (auto& p : net.parameters()) *p.value += testing::random_matrix(p.value->rows(), p.value->cols(), rng, 0.1);
    std::stringstream buf;
    save_checkpoint(buf, net);
    const auto loaded = load_checkpoint(buf);
    const double before = masked_cross_entropy(network_predict(net, lap, x), labels, mask).loss;
    const double after = masked_cross_entropy(network_predict(loaded, lap, x), labels, mask).loss;
    EXPECT_LE(std::abs(before - after), 1e-12);
    EXPECT_EQ(network_predict(net, lap, x), network_predict(loaded, lap, x));
    EXPECT_EQ(format_architecture(loaded.architecture()), format_architecture(net.architecture()));
  }
}

TEST(Checkpoint, RejectsForeignOrDamagedDocuments) {
  std::istringstream foreign(R"({"format": "something-else", "version": 1})");
  EXPECT_THROW(load_checkpoint(foreign), Error);
  std::istringstream garbage("not json");
  EXPECT_THROW(load_checkpoint(garbage), Error);

  auto net = Network::initialize(make_architecture(2, 2, {{1}}, 2, Aggregator::concat), 1);
  std::stringstream buf;
  save_checkpoint(buf, net);
  std::string text = buf.str();
  const auto pos = text.find("\"classifier.bias\"");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 17, "\"classifier.bogus\"");
  std::istringstream damaged(text);
  EXPECT_THROW(load_checkpoint(damaged), Error);
}

}  // namespace
}  // namespace mkgcn
