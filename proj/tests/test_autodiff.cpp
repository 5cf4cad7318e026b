#include <gtest/gtest.h>

#include <cmath>

#include "seven/autodiff.hpp"
#include "seven/error.hpp"
#include "support.hpp"

namespace seven {
namespace {

using testing::central_difference;
using testing::max_rel_err;
using testing::random_tensor;

TEST(Tensor, RejectsZeroExtentsAndMismatchedData) {
  EXPECT_THROW(Tensor(Shape{0, 3}), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(Tensor::vector({1, 2}).rows(), 1u);
}

TEST(Tensor, FiniteCheck) {
  Tensor t({2}, 1.0);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

// Checks d(sum(w * f(inputs)))/d(inputs) against central differences, with a
// random weighting w so that every output element matters.
void check_op(std::vector<Tensor> inputs,
              const std::function<Var(Graph&, std::vector<Var>&)>& op, double tol = 1e-7) {
  Rng rng(99);
  Tensor weight;
  auto eval = [&](bool record, std::vector<Tensor>* grads) {
    Graph g;
    std::vector<Var> vars;
    for (auto& t : inputs) vars.push_back(g.parameter(t));
    Var out = op(g, vars);
    if (weight.empty()) weight = random_tensor(out.shape(), rng);
    Var loss = ops::sum(ops::mul(out, g.constant(weight)));
    if (record) {
      g.backward(loss);
      for (auto& v : vars) grads->push_back(g.grad(v));
    }
    return loss.value()[0];
  };
  std::vector<Tensor> analytic;
  eval(true, &analytic);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor numeric = central_difference(inputs[i], [&] { return eval(false, nullptr); }, 1e-6);
    EXPECT_LT(max_rel_err(analytic[i], numeric), tol) << "input " << i;
  }
}

TEST(Autodiff, MatmulGradients) {
  Rng rng(1);
  check_op({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
           [](Graph&, auto& v) { return ops::matmul(v[0], v[1]); });
}

TEST(Autodiff, AddWithBroadcastBias) {
  Rng rng(2);
  check_op({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
           [](Graph&, auto& v) { return ops::add(v[0], v[1]); });
  check_op({random_tensor({3, 4}, rng), random_tensor({1, 4}, rng)},
           [](Graph&, auto& v) { return ops::add(v[0], v[1]); });
}

TEST(Autodiff, ElementwiseAndReductions) {
  Rng rng(3);
  check_op({random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)},
           [](Graph&, auto& v) { return ops::mul(v[0], v[1]); });
  check_op({random_tensor({2, 5}, rng)}, [](Graph&, auto& v) { return ops::scale(v[0], -0.7); });
  check_op({random_tensor({2, 5}, rng)}, [](Graph&, auto& v) { return ops::gelu(v[0]); });
  check_op({random_tensor({3, 5}, rng, -3, 3)},
           [](Graph&, auto& v) { return ops::softmax_rows(v[0]); });
}

TEST(Autodiff, LayerNorm) {
  Rng rng(4);
  check_op({random_tensor({3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)},
           [](Graph&, auto& v) { return ops::layer_norm(v[0], v[1], v[2]); }, 1e-6);
}

TEST(Autodiff, CrossEntropy) {
  Rng rng(5);
  const std::vector<int> labels = {2, 0, 1};
  check_op({random_tensor({3, 4}, rng, -2, 2)},
           [&](Graph&, auto& v) { return ops::cross_entropy(v[0], labels); });
}

TEST(Autodiff, StructuralOps) {
  Rng rng(6);
  check_op({random_tensor({3, 4}, rng)}, [](Graph&, auto& v) { return ops::transpose(v[0]); });
  check_op({random_tensor({3, 4}, rng)},
           [](Graph&, auto& v) { return ops::reshape(v[0], {2, 6}); });
  check_op({random_tensor({4, 3}, rng)},
           [](Graph&, auto& v) { return ops::slice_rows(v[0], 1, 3); });
  check_op({random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)}, [](Graph&, auto& v) {
    return ops::concat_cols(std::vector<Var>{v[0], v[1]});
  });
  check_op({random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)}, [](Graph&, auto& v) {
    return ops::concat_rows(std::vector<Var>{v[0], v[1]});
  });
  const std::vector<std::size_t> idx = {2, 0, 2, 1};
  check_op({random_tensor({3, 2}, rng)},
           [&](Graph&, auto& v) { return ops::gather_rows(v[0], idx); });
}

TEST(Autodiff, SoftmaxRowsSumToOneAndResistOverflow) {
  Graph g;
  Var x = g.constant(Tensor::matrix(2, 3, {1000, 1001, 1002, -5, 0, 5}));
  const Tensor p = ops::softmax_rows(x).value();
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += p.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  EXPECT_TRUE(p.all_finite());
}

TEST(Autodiff, GeluMatchesErfDefinition) {
  Graph g;
  const Tensor x = Tensor::vector({-2.0, -0.5, 0.0, 0.3, 1.7});
  const Tensor y = ops::gelu(g.constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(y[i], 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0))), 1e-15);
}

TEST(Autodiff, ShapeErrorsNameTheOp) {
  Graph g;
  Var a = g.parameter(Tensor({2, 3}));
  Var b = g.parameter(Tensor({2, 3}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  EXPECT_THROW(ops::add(a, g.parameter(Tensor({4}))), ShapeError);
  EXPECT_THROW(ops::slice_rows(a, 1, 5), ShapeError);
  EXPECT_THROW(ops::cross_entropy(a, std::vector<int>{0}), ShapeError);
}

TEST(Autodiff, BackwardNeedsScalarLoss) {
  Graph g;
  Var a = g.parameter(Tensor({2, 2}, 1.0));
  EXPECT_THROW(g.backward(a), ShapeError);
}

TEST(Autodiff, UnreachedNodeHasZeroGradient) {
  Graph g;
  Var a = g.parameter(Tensor({2}, 1.0));
  Var b = g.parameter(Tensor({2}, 3.0));
  g.backward(ops::sum(a));
  EXPECT_EQ(g.grad(b), Tensor({2}, 0.0));
  EXPECT_EQ(g.grad(a), Tensor({2}, 1.0));
}

TEST(Autodiff, ReusedNodeAccumulates) {
  Graph g;
  Var a = g.parameter(Tensor::vector({2.0, -1.0}));
  g.backward(ops::sum(ops::mul(a, a)));
  EXPECT_EQ(g.grad(a), Tensor::vector({4.0, -2.0}));
  // A second backward starts from fresh buffers.
  g.backward(ops::sum(ops::mul(a, a)));
  EXPECT_EQ(g.grad(a), Tensor::vector({4.0, -2.0}));
}

}  // namespace
}  // namespace seven
