#include <gtest/gtest.h>

#include <cmath>

#include "steerlm/autodiff/fd_check.hpp"
#include "steerlm/autodiff/ops.hpp"
#include "steerlm/model/sampling.hpp"
#include "steerlm/steering/pplm.hpp"
#include "support.hpp"

namespace steerlm {
namespace {

using testing::ToyWorld;

// A primed cache over a random context plus the matching inputs for one step.
struct StepFixture {
  KVCache cache;
  std::vector<double> original;
  PoolState pool;
  int token = 0;

  StepFixture(const TransformerLM& lm, std::uint64_t seed, int len = 6) {
    std::mt19937_64 rng(seed);
    std::vector<int> ctx{Vocab::kBos};
    for (int i = 0; i < len; ++i) ctx.push_back(Vocab::kNumReserved + static_cast<int>(rng() % (lm.config().vocab - 5)));
    token = ctx.back();
    ctx.pop_back();
    cache = lm.forward_full(ctx).cache;
    original = softmax(lm.step(token, cache).logits.vec());
    pool = {Tensor({1, lm.config().width}), 0};
  }

  PerturbInputs inputs(const ToyWorld& w, const std::string& attr = "positive") const {
    PerturbInputs in;
    in.lm = w.lm.get();
    in.disc = &w.disc;
    in.attribute = w.disc.attribute(attr);
    in.token = token;
    in.cache = &cache;
    in.pool = &pool;
    in.original = original;
    return in;
  }
};

double delta_norm(const KVDelta& d) {
  double sq = 0;
  for (int l = 0; l < d.layers(); ++l) {
    for (const Tensor* t : {&d.keys[l], &d.values[l]}) {
      for (Scalar x : t->vec()) sq += static_cast<double>(x) * x;
    }
  }
  return std::sqrt(sq);
}

TEST(PPLMConfig, RejectsEachInvalidField) {
  auto expect_field = [](PPLMConfig c, const std::string& field) {
    try {
      c.validate();
      ADD_FAILURE() << "accepted invalid " << field;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  PPLMConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alpha = 0;
  expect_field(c, "alpha");
  c = {};
  c.iterations = -1;
  expect_field(c, "p");
  c = {};
  c.gamma = -0.5;
  expect_field(c, "gamma");
  c = {};
  c.kl_scale = -1;
  expect_field(c, "kl_scale");
  c = {};
  c.gm_scale = 1.5;
  expect_field(c, "gm_scale");
  c = {};
  c.grad_floor = 0;
  expect_field(c, "grad_floor");
  c = {};
  c.window = -2;
  expect_field(c, "window");
}

TEST(PPLMConfig, JsonRoundTrip) {
  PPLMConfig c;
  c.alpha = 0.07;
  c.iterations = 3;
  c.layers = {1};
  c.window = 5;
  c.kl_schedule = KlSchedule::kAlternating;
  c.pool_context = true;
  const PPLMConfig r = PPLMConfig::from_json(c.to_json());
  EXPECT_EQ(r.to_json(), c.to_json());
  EXPECT_THROW(parse_kl_schedule("sometimes"), std::invalid_argument);
}

TEST(Fuse, Endpoints) {
  const std::vector<double> pt{0.7, 0.2, 0.1}, p{0.1, 0.3, 0.6};
  EXPECT_EQ(fuse_distributions(pt, p, 1.0), pt);
  EXPECT_EQ(fuse_distributions(pt, p, 0.0), p);
}

TEST(Fuse, Symmetry) {
  const auto f = fuse_distributions(std::vector<double>{0.8, 0.2}, std::vector<double>{0.2, 0.8}, 0.5);
  EXPECT_NEAR(f[0], 0.5, 1e-15);
  EXPECT_NEAR(f[1], 0.5, 1e-15);
}

TEST(Fuse, ZeroNormaliserRejected) {
  EXPECT_THROW(fuse_distributions(std::vector<double>{1, 0}, std::vector<double>{0, 1}, 0.5), std::domain_error);
  EXPECT_THROW(fuse_distributions(std::vector<double>{1}, std::vector<double>{0.5, 0.5}, 0.5), std::invalid_argument);
}

TEST(Fuse, IsADistribution) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(7), b(7);
    double za = 0, zb = 0;
    for (int i = 0; i < 7; ++i) za += a[i] = uniform01(rng) + 1e-3, zb += b[i] = uniform01(rng) + 1e-3;
    for (int i = 0; i < 7; ++i) a[i] /= za, b[i] /= zb;
    const auto f = fuse_distributions(a, b, uniform01(rng));
    double s = 0;
    for (double x : f) {
      EXPECT_GE(x, 0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Perturb, UnitStepWhenGammaOneAndNoKl) {
  ToyWorld w;
  StepFixture fx(*w.lm, 5);
  PPLMConfig cfg;
  cfg.gamma = 1;
  cfg.kl_scale = 0;
  KVDelta delta = fx.cache.zeros_like();
  const PerturbResult r = perturb_step(fx.inputs(w), delta, cfg);
  ASSERT_TRUE(r.applied);
  EXPECT_NEAR(delta_norm(delta), cfg.alpha, 1e-15);
}

TEST(Perturb, AttributeGradientMatchesFiniteDifferences) {
  ToyWorld w;
  for (std::uint64_t seed : {1, 2, 3}) {
    StepFixture fx(*w.lm, seed);
    // A nonzero starting point and a non-empty pool so every path is live.
    fx.pool.sum = Tensor::randn({1, w.cfg.width}, *std::make_unique<std::mt19937_64>(seed), Scalar(0.5));
    fx.pool.count = 2;
    PerturbInputs in = fx.inputs(w);
    std::mt19937_64 rng(seed + 10);
    KVDelta base = fx.cache.zeros_like();
    for (int l = 0; l < base.layers(); ++l) {
      base.keys[l] = Tensor::randn(base.keys[l].shape(), rng, Scalar(0.05));
      base.values[l] = Tensor::randn(base.values[l].shape(), rng, Scalar(0.05));
    }
    KVDelta grad;
    perturb_objective(in, base, 1.0, 0.5, &grad);
    // Check each layer's key and value deltas through a scalar function of one tensor.
    for (int l = 0; l < base.layers(); ++l) {
      for (int kv = 0; kv < 2; ++kv) {
        const Tensor& x0 = kv == 0 ? base.keys[l] : base.values[l];
        const Tensor& g0 = kv == 0 ? grad.keys[l] : grad.values[l];
        auto objective = [&](const Tensor& x) {
          KVDelta d = base;
          (kv == 0 ? d.keys[l] : d.values[l]) = x;
          const PerturbObjective o = perturb_objective(in, d, 1.0, 0.5);
          return o.attribute_loss + 0.5 * o.kl;
        };
        double worst = 0;
        const double h = 1e-5;
        for (std::size_t i = 0; i < x0.size(); ++i) {
          Tensor xp = x0, xm = x0;
          xp[i] += h;
          xm[i] -= h;
          const double num = (objective(xp) - objective(xm)) / (2 * h);
          const double an = g0[i];
          worst = std::max(worst, std::abs(an - num) / (std::abs(an) + std::abs(num) + 1e-6));
        }
        EXPECT_LT(worst, 1e-4) << "layer " << l << (kv ? " values" : " keys") << " seed " << seed;
      }
    }
  }
}

TEST(Perturb, TenIterationsLowerTheAttributeLoss) {
  int lower = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ToyWorld w(seed + 1);
    StepFixture fx(*w.lm, seed + 100);
    PerturbInputs in = fx.inputs(w, seed % 2 ? "positive" : "negative");
    PPLMConfig cfg;
    KVDelta delta = fx.cache.zeros_like();
    const double before = perturb_objective(in, delta, 1, 0).attribute_loss;
    for (int it = 0; it < 10; ++it) perturb_step(in, delta, cfg, it);
    const double after = perturb_objective(in, delta, 1, 0).attribute_loss;
    lower += after < before;
  }
  EXPECT_GE(lower, 90);
}

TEST(Perturb, NonFiniteGradientRollsBack) {
  ToyWorld w;
  StepFixture fx(*w.lm, 4);
  fx.cache.keys[0][0] = std::numeric_limits<Scalar>::quiet_NaN();
  KVDelta delta = fx.cache.zeros_like();
  delta.values[1][3] = Scalar(0.25);
  const KVDelta before = delta;
  const PerturbResult r = perturb_step(fx.inputs(w), delta, PPLMConfig{});
  EXPECT_FALSE(r.applied);
  EXPECT_FALSE(r.warning.empty());
  for (int l = 0; l < delta.layers(); ++l) {
    EXPECT_EQ(delta.keys[l].vec(), before.keys[l].vec());
    EXPECT_EQ(delta.values[l].vec(), before.values[l].vec());
  }
}

TEST(Perturb, LayerAndWindowMasks) {
  ToyWorld w;
  StepFixture fx(*w.lm, 8, 10);
  PPLMConfig cfg;
  cfg.layers = {1};
  cfg.window = 3;
  KVDelta delta = fx.cache.zeros_like();
  for (int it = 0; it < 3; ++it) perturb_step(fx.inputs(w), delta, cfg, it);
  for (Scalar x : delta.keys[0].vec()) EXPECT_EQ(x, 0);
  for (Scalar x : delta.values[0].vec()) EXPECT_EQ(x, 0);
  const int rows = delta.keys[1].rows();
  double recent = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < delta.keys[1].cols(); ++c) {
      if (r < rows - 3) {
        EXPECT_EQ(delta.keys[1].at(r, c), 0);
        EXPECT_EQ(delta.values[1].at(r, c), 0);
      } else {
        recent += std::abs(delta.keys[1].at(r, c)) + std::abs(delta.values[1].at(r, c));
      }
    }
  }
  EXPECT_GT(recent, 0);
}

TEST(Perturb, NeverMutatesParamsOrCache) {
  ToyWorld w;
  StepFixture fx(*w.lm, 9);
  const std::uint64_t params = w.lm->params().checksum();
  const KVCache cache = fx.cache;
  KVDelta delta = fx.cache.zeros_like();
  for (int it = 0; it < 5; ++it) perturb_step(fx.inputs(w), delta, PPLMConfig{}, it);
  EXPECT_EQ(w.lm->params().checksum(), params);
  for (int l = 0; l < cache.layers(); ++l) {
    EXPECT_EQ(fx.cache.keys[l].vec(), cache.keys[l].vec());
    EXPECT_EQ(fx.cache.values[l].vec(), cache.values[l].vec());
  }
}

TEST(Perturb, SchedulesDiffer) {
  ToyWorld w;
  StepFixture fx(*w.lm, 12);
  std::vector<KVDelta> out;
  for (KlSchedule s : {KlSchedule::kCombined, KlSchedule::kAlternating, KlSchedule::kOncePerToken}) {
    PPLMConfig cfg;
    cfg.kl_scale = 1.0;
    cfg.kl_schedule = s;
    KVDelta delta = fx.cache.zeros_like();
    for (int it = 0; it < 4; ++it) EXPECT_TRUE(perturb_step(fx.inputs(w), delta, cfg, it).applied);
    EXPECT_TRUE(delta.keys[0].all_finite());
    out.push_back(delta);
  }
  EXPECT_NE(out[0].keys[0].vec(), out[1].keys[0].vec());
  EXPECT_NE(out[0].keys[0].vec(), out[2].keys[0].vec());
}

// KL(fused || original) at the first generated token, averaged over seeds.
double mean_fused_kl(double kl_scale) {
  double total = 0;
  const int seeds = 12;
  for (int s = 0; s < seeds; ++s) {
    ToyWorld w(s + 1);
    StepFixture fx(*w.lm, s + 50);
    PPLMConfig cfg;
    cfg.kl_scale = kl_scale;
    KVDelta delta = fx.cache.zeros_like();
    for (int it = 0; it < 10; ++it) perturb_step(fx.inputs(w), delta, cfg, it);
    const auto pt = softmax(w.lm->step(fx.token, fx.cache, &delta).logits.vec());
    const auto f = fuse_distributions(pt, fx.original, cfg.gm_scale);
    double kl = 0;
    for (std::size_t i = 0; i < f.size(); ++i) kl += f[i] * std::log(f[i] / fx.original[i]);
    total += kl;
  }
  return total / seeds;
}

TEST(Perturb, KlShrinksAsLambdaGrows) {
  double prev = mean_fused_kl(0.0);
  EXPECT_GT(prev, 0);
  for (double lam : {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0}) {
    const double kl = mean_fused_kl(lam);
    EXPECT_LE(kl, prev) << "lambda " << lam;
    prev = kl;
  }
  EXPECT_LT(prev, 0.05 * mean_fused_kl(0.0));
}

}  // namespace
}  // namespace steerlm
