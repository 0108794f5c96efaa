#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "guef/autograd.hpp"
#include "guef/error.hpp"
#include "guef/gradcheck.hpp"

using namespace guef;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Tensor::Shape shape, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = n(rng);
  return t;
}

Tensor value_of(const std::function<Var(Tape&)>& build) {
  Tape tape;
  return build(tape).value();
}

}  // namespace

TEST(Primitives, Conv1dValid) {
  const Tensor out = value_of([](Tape& t) {
    return conv1d(t.constant(Tensor::row({1, 2, 3})), t.constant(Tensor({1, 1, 2}, {1, 1})),
                  t.constant(Tensor({1, 1}, 0.0)), Padding::kValid);
  });
  EXPECT_EQ(out, Tensor::row({3, 5}));
}

TEST(Primitives, Conv1dSamePreservesWidth) {
  const Tensor out = value_of([](Tape& t) {
    return conv1d(t.constant(Tensor::row({1, 2, 3})), t.constant(Tensor({1, 1, 3}, {1, 1, 1})),
                  t.constant(Tensor({1, 1}, 0.5)), Padding::kSame);
  });
  EXPECT_EQ(out, Tensor::row({3.5, 6.5, 5.5}));
}

TEST(Primitives, Conv1dIdentityKernelReproducesInput) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor(rng, {5, 9});
  Tensor w({5, 5, 1}, 0.0);
  for (std::size_t c = 0; c < 5; ++c) w[c * 5 + c] = 1.0;
  const Tensor out = value_of([&](Tape& t) {
    return conv1d(t.constant(x), t.constant(w), t.constant(Tensor({5, 1}, 0.0)), Padding::kSame);
  });
  EXPECT_EQ(out, x);
}

TEST(Primitives, SoftmaxAndSigmoid) {
  const Tensor sm = value_of([](Tape& t) { return softmax_rows(t.constant(Tensor::row({2, 2, 2, 2}))); });
  for (double v : sm.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_DOUBLE_EQ(value_of([](Tape& t) { return sigmoid(t.constant(Tensor::scalar(0))); }).item(), 0.5);

  std::mt19937_64 rng(9);
  const Tensor x = random_tensor(rng, {6, 7}, 20.0);
  const Tensor rows = value_of([&](Tape& t) { return softmax_rows(t.constant(x)); });
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += rows.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const Tensor sig = value_of([&](Tape& t) { return sigmoid(t.constant(random_tensor(rng, {50, 1}, 5.0))); });
  for (double v : sig.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Primitives, ExpClippedClamps) {
  const Tensor out = value_of([](Tape& t) { return exp_clipped(t.constant(Tensor::row({0.0, 20.0, -20.0}))); });
  EXPECT_DOUBLE_EQ(out[0], 1.0);
  EXPECT_DOUBLE_EQ(out[1], std::exp(10.0));
  EXPECT_DOUBLE_EQ(out[2], std::exp(-10.0));
}

TEST(Primitives, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var b = tape.constant(Tensor({4, 5}, 1.0));
  try {
    matmul(a, b);
    FAIL();
  } catch (const ValidationError& err) {
    const std::string msg = err.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(a, b), ValidationError);
  EXPECT_THROW(concat_rows(a, b), ValidationError);
}

TEST(Primitives, BroadcastingAlongUnitAxes) {
  const Tensor out = value_of([](Tape& t) {
    return mul(t.constant(Tensor::matrix({{2, 4}, {6, 8}})), t.constant(Tensor::row({0.5, 0.25})));
  });
  EXPECT_EQ(out, Tensor::matrix({{1, 1}, {3, 2}}));
}

TEST(TopK, TiesPreferLowerIndex) {
  const std::vector<double> v{0.5, 0.9, 0.5, 0.9, 0.1};
  EXPECT_EQ(topk_indices(v, 3), (std::vector<std::size_t>{1, 3, 0}));
  EXPECT_THROW(topk_indices(v, 6), ValidationError);
}

TEST(Grad, ScalarExamples) {
  const std::vector<Tensor> x{Tensor::scalar(3.0)};
  EXPECT_DOUBLE_EQ(grad([](Tape&, std::span<const Var> in) { return in[0] * in[0]; }, x)[0].item(), 6.0);
  const std::vector<Tensor> zero{Tensor::scalar(0.0)};
  EXPECT_DOUBLE_EQ(grad([](Tape&, std::span<const Var> in) { return sigmoid(in[0]); }, zero)[0].item(), 0.25);
}

TEST(Grad, NonScalarOutputIsRejected) {
  const std::vector<Tensor> x{Tensor::row({1, 2})};
  EXPECT_THROW(grad([](Tape&, std::span<const Var> in) { return in[0]; }, x), ValidationError);
}

TEST(Grad, BackwardVisitsEachNodeOnce) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(2.0));
  Var y = x * x;
  Var z = y * y + y;  // y reused
  tape.backward(z);
  // nodes: y, y*y, (y*y)+y = 3 differentiable non-leaf nodes
  EXPECT_EQ(tape.backward_visits(), 3u);
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 4 * 8 + 4);  // d/dx (x^4 + x^2) at 2
}

TEST(FiniteDiff, Examples) {
  EXPECT_NEAR(finite_diff([](const Tensor& x) { return x[0] * x[0]; }, Tensor::scalar(3.0), 1e-5).item(), 6.0, 1e-8);
  EXPECT_NEAR(finite_diff([](const Tensor& x) { return std::tanh(x[0]); }, Tensor::scalar(1.0), 1e-5).item(),
              0.41997434161402614, 1e-6);
  EXPECT_THROW(finite_diff([](const Tensor&) { return 0.0; }, Tensor::scalar(1.0), 0.0), ValidationError);
}

// Every differentiable primitive in isolation against central differences.
TEST(Grad, PrimitivesMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  const Tensor a = random_tensor(rng, {3, 4});
  const Tensor b = random_tensor(rng, {3, 4});
  const Tensor pos = [&] {
    Tensor t = random_tensor(rng, {3, 4});
    for (double& v : t.data()) v = std::abs(v) + 0.5;
    return t;
  }();
  const Tensor row = random_tensor(rng, {1, 4});
  const Tensor col = random_tensor(rng, {3, 1});
  const Tensor m = random_tensor(rng, {4, 2});
  const Tensor w = random_tensor(rng, {2, 3, 3});
  const Tensor bias = random_tensor(rng, {2, 1});
  const std::vector<std::size_t> picks{2, 0, 2};

  struct Case {
    const char* name;
    ScalarProgram f;
    std::vector<Tensor> in;
  };
  auto weighted = [&](Var v) {
    // Contract with a fixed random tensor so each output coordinate matters.
    std::mt19937_64 r(99);
    Tensor c(v.shape());
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : c.data()) x = n(r);
    return sum(v * v.tape().constant(c.rank() == 2 ? c : c.reshaped({1, c.size()})));
  };
  const std::vector<Case> cases = {
      {"add", [&](Tape&, auto in) { return weighted(in[0] + in[1]); }, {a, b}},
      {"sub_row", [&](Tape&, auto in) { return weighted(in[0] - in[1]); }, {a, row}},
      {"mul_col", [&](Tape&, auto in) { return weighted(in[0] * in[1]); }, {a, col}},
      {"div", [&](Tape&, auto in) { return weighted(in[0] / in[1]); }, {a, pos}},
      {"scale_shift", [&](Tape&, auto in) { return weighted(in[0] * 1.7 + 0.3); }, {a}},
      {"matmul", [&](Tape&, auto in) { return weighted(matmul(in[0], in[1])); }, {a, m}},
      {"transpose", [&](Tape&, auto in) { return weighted(transpose(in[0])); }, {a}},
      {"conv_same", [&](Tape&, auto in) { return weighted(conv1d(in[0], in[1], in[2], Padding::kSame)); }, {a, w, bias}},
      {"conv_valid", [&](Tape&, auto in) { return weighted(conv1d(in[0], in[1], in[2], Padding::kValid)); }, {a, w, bias}},
      {"concat_rows", [&](Tape&, auto in) { return weighted(concat_rows(in[0], in[1])); }, {a, b}},
      {"concat_cols", [&](Tape&, auto in) { std::vector<Var> p{in[0], in[1]}; return weighted(concat_cols(p)); }, {a, col}},
      {"slice_rows", [&](Tape&, auto in) { return weighted(slice_rows(in[0], 1, 3)); }, {a}},
      {"slice_cols", [&](Tape&, auto in) { return weighted(slice_cols(in[0], 1, 3)); }, {a}},
      {"gather_rows", [&](Tape&, auto in) { return weighted(gather_rows(in[0], picks)); }, {a}},
      {"reshape", [&](Tape&, auto in) { return weighted(reshape(in[0], {2, 6})); }, {a}},
      {"mean", [&](Tape&, auto in) { return mean(in[0] * in[0]); }, {a}},
      {"row_sum", [&](Tape&, auto in) { return weighted(row_sum(in[0])); }, {a}},
      {"col_mean", [&](Tape&, auto in) { return weighted(col_mean(in[0])); }, {a}},
      {"sigmoid", [&](Tape&, auto in) { return weighted(sigmoid(in[0])); }, {a}},
      {"tanh", [&](Tape&, auto in) { return weighted(guef::tanh(in[0])); }, {a}},
      {"relu", [&](Tape&, auto in) { return weighted(relu(in[0])); }, {a}},
      {"abs", [&](Tape&, auto in) { return weighted(guef::abs(in[0])); }, {a}},
      {"exp_clipped", [&](Tape&, auto in) { return weighted(exp_clipped(in[0])); }, {a}},
      {"log_floor", [&](Tape&, auto in) { return weighted(log_floor(in[0])); }, {pos}},
      {"clamp_min", [&](Tape&, auto in) { return weighted(clamp_min(in[0], 0.1)); }, {a}},
      {"softmax_rows", [&](Tape&, auto in) { return weighted(softmax_rows(in[0])); }, {a}},
  };
  for (const auto& c : cases) {
    EXPECT_LT(check_gradient(c.f, c.in), 1e-6) << c.name;
  }
}

TEST(Grad, TwoLayerNetworkMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(rng, {5, 3});
  const std::vector<Tensor> params{random_tensor(rng, {3, 8}), random_tensor(rng, {1, 8}), random_tensor(rng, {8, 2})};
  const ScalarProgram net = [&](Tape& tape, std::span<const Var> p) {
    Var h = guef::tanh(matmul(tape.constant(x), p[0]) + p[1]);
    return mean(softmax_rows(matmul(h, p[2])) * tape.constant(Tensor({5, 2}, 0.7)));
  };
  EXPECT_LT(check_gradient(net, params), 1e-4);
}

TEST(Determinism, RepeatedEvaluationIsBitStable) {
  std::mt19937_64 rng(8);
  const std::vector<Tensor> in{random_tensor(rng, {4, 6}), random_tensor(rng, {6, 3})};
  const ScalarProgram f = [](Tape&, std::span<const Var> p) { return sum(softmax_rows(matmul(p[0], p[1]))); };
  const auto g1 = grad(f, in);
  const auto g2 = grad(f, in);
  EXPECT_EQ(g1, g2);
  EXPECT_EQ(evaluate(f, in), evaluate(f, in));
}
