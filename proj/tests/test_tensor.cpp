#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "svt/grad_check.hpp"
#include "svt/tensor.hpp"
#include "test_util.hpp"

using svt::Shape;
using svt::Tensor;
using TD = Tensor<double>;

namespace {

TD leaf(Shape s, std::vector<double> v) { return TD(std::move(s), std::move(v), true); }

TD random_leaf(Shape s, svt::Rng& rng) {
  const auto n = svt::numel(s);
  return TD(std::move(s), testutil::random_values<double>(n, rng), true);
}

// Projects an arbitrary tensor onto a scalar with fixed random weights so
// every output element carries a distinct gradient.
TD probe(const TD& y, std::uint64_t seed) {
  svt::Rng rng(seed);
  TD w(y.shape(), testutil::random_values<double>(y.numel(), rng));
  return svt::sum_sq(svt::add(y, w));
}

double check(const std::function<TD()>& fn, const std::vector<TD>& params) {
  std::vector<svt::NamedTensor<double>> named;
  for (std::size_t i = 0; i < params.size(); ++i) named.push_back({"p" + std::to_string(i), params[i]});
  return svt::grad_check(fn, named, 1e-6).max_rel_error();
}

}  // namespace

TEST(Backward, SumOfSquaresGradient) {
  auto x = leaf({2}, {1, 2});
  svt::backward(svt::sum_sq(x));
  ASSERT_TRUE(x.has_grad());
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Backward, DisconnectedLeafGetsZeroGradient) {
  auto x = leaf({3}, {1, 2, 3});
  auto unused = leaf({2}, {5, 6});
  svt::backward(svt::sum_sq(x));
  for (double g : unused.grad_or_zero()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, ConstantLossHasZeroGradient) {
  auto x = leaf({2}, {0.5, -1.5});
  auto y = svt::sub(x, x);
  svt::backward(svt::sum_sq(y));
  for (double g : x.grad_or_zero()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  auto x = leaf({2}, {1, 2});
  EXPECT_THROW(svt::backward(svt::scale(x, 2.0)), svt::ShapeError);
}

TEST(Backward, SecondCallWithoutNewForwardFails) {
  auto x = leaf({2}, {1, 2});
  auto loss = svt::sum_sq(svt::scale(x, 3.0));
  svt::backward(loss);
  EXPECT_THROW(svt::backward(loss), svt::GraphError);
}

TEST(Backward, LeafGradientsAccumulateAcrossPasses) {
  auto x = leaf({1}, {3});
  svt::backward(svt::sum_sq(x));
  svt::backward(svt::sum_sq(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, SharedSubexpressionCountsEveryUse) {
  auto x = leaf({1}, {2});
  auto y = svt::scale(x, 3.0);
  svt::backward(svt::sum_sq(svt::add(y, y)));  // (6x)^2 -> 72x
  EXPECT_DOUBLE_EQ(x.grad()[0], 144.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = leaf({2}, {1, 2});
  TD loss;
  {
    svt::NoGradGuard g;
    loss = svt::sum_sq(x);
  }
  EXPECT_FALSE(loss.requires_grad());
  EXPECT_THROW(svt::backward(loss), svt::GraphError);
}

TEST(Primitives, ShapeErrorsNameThePrimitive) {
  auto a = TD::zeros({2, 3});
  auto b = TD::zeros({4, 2});
  try {
    svt::matmul(a, b);
    FAIL() << "no throw";
  } catch (const svt::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(svt::add(a, b), svt::ShapeError);
  EXPECT_THROW(svt::reshape(a, {5}), svt::ShapeError);
  EXPECT_THROW(svt::transpose(a, {0, 0}), svt::ShapeError);
  EXPECT_THROW(svt::concat<double>({a, b}, 0), svt::ShapeError);
  EXPECT_THROW(svt::take(a, 1, {3}), svt::ShapeError);
  EXPECT_THROW(svt::slice(a, 1, 2, 2), svt::ShapeError);
}

TEST(Primitives, NonFiniteInputsAreRejected) {
  auto a = TD({2}, {1.0, std::nan("")});
  auto b = TD({2}, {1.0, 1.0});
  EXPECT_THROW(svt::add(a, b), svt::NonFiniteError);
  EXPECT_THROW(svt::add(b, a), svt::NonFiniteError);
  EXPECT_THROW(svt::softmax_lastdim(TD({2}, {1.0, INFINITY})), svt::NonFiniteError);
  EXPECT_THROW(svt::sum_sq(a), svt::NonFiniteError);
}

TEST(Primitives, ForwardValues) {
  auto a = TD({2, 2}, {1, 2, 3, 4});
  auto b = TD({2, 2}, {5, 6, 7, 8});
  auto m = svt::matmul(a, b);
  EXPECT_EQ(std::vector<double>(m.data().begin(), m.data().end()), (std::vector<double>{19, 22, 43, 50}));
  auto t = svt::transpose_last2(a);
  EXPECT_EQ(std::vector<double>(t.data().begin(), t.data().end()), (std::vector<double>{1, 3, 2, 4}));
  auto s = svt::softmax_lastdim(TD({2}, {1000.0, 1000.0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(svt::mean(a).item(), 2.5);
  auto c = svt::concat<double>({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 4}));
  EXPECT_DOUBLE_EQ(c[2], 5.0);
  auto g = svt::take(a, 0, {1, 1, 0});
  EXPECT_EQ(std::vector<double>(g.data().begin(), g.data().end()), (std::vector<double>{3, 4, 3, 4, 1, 2}));
  EXPECT_DOUBLE_EQ(svt::gelu(TD({1}, {0.0}))[0], 0.0);
  EXPECT_DOUBLE_EQ(svt::relu(TD({2}, {-1.0, 2.0}))[0], 0.0);
}

TEST(Primitives, LayerNormNormalizesRows) {
  svt::Rng rng(3);
  auto x = random_leaf({3, 7}, rng);
  auto y = svt::layer_norm(x, TD::full({7}, 1.0), TD::zeros({7}));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 7; ++i) m += y[r * 7 + i];
    m /= 7;
    for (std::size_t i = 0; i < 7; ++i) v += (y[r * 7 + i] - m) * (y[r * 7 + i] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 7, 1.0, 1e-5);
  }
}

TEST(GradCheck, QuadraticIsExactUpToRounding) {
  svt::Rng rng(1);
  auto x = random_leaf({5}, rng);
  auto w = random_leaf({5}, rng);
  auto fn = [&] { return svt::sum_sq(svt::sub(x, w)); };
  EXPECT_LT(svt::grad_check(fn, {{"x", x}, {"w", w}}, 1e-3).max_rel_error(), 1e-7);
}

TEST(GradCheck, MeanOfMatmulMatchesFiniteDifferences) {
  svt::Rng rng(2);
  auto W = random_leaf({3, 4}, rng);
  TD x({4, 2}, testutil::random_values<double>(8, rng));
  auto fn = [&] { return svt::mean(svt::matmul(W, x)); };
  EXPECT_LT(svt::grad_check(fn, {{"W", W}}, 1e-6).max_rel_error(), 1e-4);
}

TEST(GradCheck, RejectsBadStepAndNonFiniteLoss) {
  auto x = leaf({1}, {1});
  auto fn = [&] { return svt::sum_sq(x); };
  EXPECT_THROW(svt::grad_check(fn, {{"x", x}}, 0.0), svt::Error);
  EXPECT_THROW(svt::grad_check(fn, {{"x", x}}, -1.0), svt::Error);
  auto big = leaf({1}, {1e200});
  auto blow = [&] { return svt::sum_sq(svt::scale(big, 1e200)); };
  EXPECT_THROW(svt::grad_check(blow, {{"big", big}}, 1e-6), svt::NonFiniteError);
}

// Every primitive on random small shapes: reverse mode agrees with central
// differences within 1e-4.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, AgreeWithFiniteDifferences) {
  svt::Rng rng(100 + GetParam());
  const std::size_t m = 1 + rng.index(3), k = 1 + rng.index(4), n = 1 + rng.index(3), bt = 1 + rng.index(2);
  const std::uint64_t s = GetParam();

  auto a = random_leaf({bt, m, k}, rng);
  auto b = random_leaf({bt, k, n}, rng);
  auto shared = random_leaf({k, n}, rng);
  EXPECT_LT(check([&] { return probe(svt::matmul(a, b), s); }, {a, b}), 1e-4) << "matmul batched";
  EXPECT_LT(check([&] { return probe(svt::matmul(a, shared), s); }, {a, shared}), 1e-4) << "matmul shared";

  auto bias = random_leaf({k}, rng);
  auto same = random_leaf({bt, m, k}, rng);
  EXPECT_LT(check([&] { return probe(svt::add(a, bias), s); }, {a, bias}), 1e-4) << "add bias";
  EXPECT_LT(check([&] { return probe(svt::sub(a, same), s); }, {a, same}), 1e-4) << "sub";
  EXPECT_LT(check([&] { return probe(svt::scale(a, 1.7), s); }, {a}), 1e-4) << "scale";
  EXPECT_LT(check([&] { return probe(svt::reshape(a, {bt * m * k}), s); }, {a}), 1e-4) << "reshape";
  EXPECT_LT(check([&] { return probe(svt::transpose(a, {2, 0, 1}), s); }, {a}), 1e-4) << "transpose";
  EXPECT_LT(check([&] { return probe(svt::concat<double>({a, same}, 1), s); }, {a, same}), 1e-4) << "concat";
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < 5; ++i) idx.push_back(rng.index(k));
  EXPECT_LT(check([&] { return probe(svt::take(a, 2, idx), s); }, {a}), 1e-4) << "take";
  EXPECT_LT(check([&] { return probe(svt::slice(a, 2, 0, k), s); }, {a}), 1e-4) << "slice";

  auto x = random_leaf({m, k + 1}, rng);
  auto g = random_leaf({k + 1}, rng);
  auto beta = random_leaf({k + 1}, rng);
  EXPECT_LT(check([&] { return probe(svt::layer_norm(x, g, beta), s); }, {x, g, beta}), 1e-4) << "layer_norm";
  EXPECT_LT(check([&] { return probe(svt::softmax_lastdim(x), s); }, {x}), 1e-4) << "softmax";
  EXPECT_LT(check([&] { return probe(svt::gelu(x), s); }, {x}), 1e-4) << "gelu";
  // relu is not differentiable at 0; random values avoid the kink almost surely
  EXPECT_LT(check([&] { return probe(svt::relu(x), s); }, {x}), 1e-4) << "relu";
  EXPECT_LT(check([&] { return svt::scale(svt::mean(x), 3.0); }, {x}), 1e-4) << "mean";
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGradients, ::testing::Range(0, 12));
