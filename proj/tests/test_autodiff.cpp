#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "steerlm/autodiff/fd_check.hpp"
#include "steerlm/autodiff/ops.hpp"
#include "op_cases.hpp"

namespace steerlm::ad {
namespace {

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Graph g;
  Var p = softmax(g.constant(Tensor({2}, {0, 0})));
  EXPECT_EQ(p.value()[0], 0.5);
  EXPECT_EQ(p.value()[1], 0.5);
}

TEST(Ops, CrossEntropyOfUniformLogitsIsLogC) {
  for (int label = 0; label < 4; ++label) {
    Graph g;
    const int labels[1] = {label};
    Var l = cross_entropy(g.constant(Tensor({1, 4})), labels);
    EXPECT_NEAR(l.value()[0], std::log(4.0), 1e-15);
  }
  EXPECT_NEAR(std::log(4.0), 1.3863, 1e-4);
}

TEST(Ops, KlOfIdenticalDistributionsIsZero) {
  Graph g;
  Var p = softmax(g.constant(random({1, 7}, 3)));
  EXPECT_EQ(kl_divergence(p, p).value()[0], 0.0);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Graph g;
    Var x = g.constant(random({5, 9}, seed, 4));
    for (int axis : {0, 1}) {
      const Tensor& p = softmax(x, axis).value();
      const int outer = axis == 1 ? 5 : 9, len = axis == 1 ? 9 : 5;
      for (int o = 0; o < outer; ++o) {
        double s = 0;
        for (int i = 0; i < len; ++i) s += axis == 1 ? p.at(o, i) : p.at(i, o);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(concat(std::vector<Var>{a, b}, 0), ShapeError);
}

TEST(Backward, SumOfSquares) {
  Graph g;
  Var x = g.leaf(Tensor({3}, {1, 2, 3}));
  g.backward(sum(mul(x, x)));
  EXPECT_EQ(g.grad(x), Tensor({3}, {2, 4, 6}));
}

TEST(Backward, RejectsNonScalarLoss) {
  Graph g;
  Var x = g.leaf(Tensor({3}, {1, 2, 3}));
  EXPECT_THROW(g.backward(mul(x, x)), std::invalid_argument);
}

TEST(Backward, SecondCallIsRejected) {
  Graph g;
  Var x = g.leaf(Tensor({3}, {1, 2, 3}));
  Var loss = sum(x);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), std::logic_error);
  EXPECT_TRUE(g.consumed());
}

TEST(Backward, IntermediateBuffersAreFreed) {
  Graph g;
  Var x = g.leaf(random({4}, 1));
  Var y = mul(x, x);
  g.backward(sum(y));
  EXPECT_TRUE(g.has_grad(x));
  EXPECT_FALSE(g.has_grad(y));
  EXPECT_THROW(y.value(), std::logic_error);
}

TEST(Backward, IsBitDeterministic) {
  auto run = [] {
    Graph g;
    Var x = g.leaf(random({6, 8}, 42));
    Var w = g.leaf(random({8, 8}, 43));
    Var gain = g.leaf(random({8}, 44));
    Var bias = g.leaf(random({8}, 45));
    Var h = layer_norm(matmul(x, w), gain, bias);
    Var a = causal_attention(h, h, h, 2);
    g.backward(project(log_softmax(a), 7));
    return std::vector<Tensor>{g.grad(x), g.grad(w), g.grad(gain), g.grad(bias)};
  };
  EXPECT_EQ(run(), run());
}

TEST(FdCheck, SumHasExactGradient) {
  // Dyadic step and integer inputs keep every evaluation exact.
  const Tensor x({5}, {1, -2, 3, 7, 0});
  EXPECT_EQ(fd_check([](Graph&, Var v) { return sum(v); }, x, 0.0078125), 0.0);
}

TEST(FdCheck, SoftmaxPick) {
  const Tensor x({3}, {1, 2, 3});
  EXPECT_LT(fd_check([](Graph&, Var v) { return pick(softmax(v), 1); }, x, 1e-5), 1e-6);
}

TEST(FdCheck, DetectsDoubledGradient) {
  auto wrong = [](Graph&, Var v) {
    Var sq = custom_unary(
        v,
        [](const Tensor& a) {
          Tensor o = a;
          for (auto& e : o.vec()) e = e * e;
          return o;
        },
        [](const Tensor& a, const Tensor& up) {
          Tensor d = a;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2 * (2 * a[i]) * up[i];  // x2 bug
          return d;
        });
    return sum(sq);
  };
  EXPECT_NEAR(fd_check(wrong, random({6}, 9), 1e-5), 1.0 / 3.0, 1e-6);
}

TEST(FdCheck, EveryOpOnTenSeeds) {
  for (const auto& c : op_cases()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const FdReport r = fd_check_report(c.fn, random(c.shape, 100 + seed), 1e-5);
      EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << seed << " worst " << r.worst_index << " analytic "
                                       << r.analytic << " numeric " << r.numeric;
    }
  }
}

TEST(FdCheck, LayerNormOnRandom4x8) {
  Tensor gain = random({8}, 5), bias = random({8}, 6);
  auto f = [&](Graph& g, Var x) { return project(layer_norm(x, g.constant(gain), g.constant(bias)), 3); };
  EXPECT_LT(fd_check(f, random({4, 8}, 7), 1e-5), 1e-5);
}

TEST(Graph, BorrowDoesNotCopyOrMutate) {
  Tensor p = random({3, 3}, 1);
  const Tensor before = p;
  Graph g;
  Var v = g.borrow(p, true);
  EXPECT_EQ(&v.value(), &p);
  g.backward(sum(mul(v, v)));
  EXPECT_EQ(p, before);
}

}  // namespace
}  // namespace steerlm::ad
