#include "steerlm/steering/pplm.hpp"

#include <cmath>
#include <stdexcept>

#include "steerlm/autodiff/ops.hpp"

namespace steerlm {

void PPLMConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (!(alpha > 0) || !std::isfinite(alpha)) bad("alpha", "must be > 0");
  if (iterations < 0) bad("p", "must be >= 0");
  if (!(gamma >= 0) || !std::isfinite(gamma)) bad("gamma", "must be >= 0");
  if (!(kl_scale >= 0) || !std::isfinite(kl_scale)) bad("kl_scale", "must be >= 0");
  if (!(gm_scale >= 0 && gm_scale <= 1)) bad("gm_scale", "must lie in [0, 1]");
  if (!(grad_floor > 0)) bad("grad_floor", "must be > 0");
  if (window < 0) bad("window", "must be >= 0");
  for (int l : layers) {
    if (l < 0) bad("layers", "indices must be >= 0");
  }
}

std::string kl_schedule_name(KlSchedule s) {
  switch (s) {
    case KlSchedule::kCombined: return "combined";
    case KlSchedule::kAlternating: return "alternating";
    case KlSchedule::kOncePerToken: return "once";
  }
  return "combined";
}

KlSchedule parse_kl_schedule(const std::string& s) {
  if (s == "combined") return KlSchedule::kCombined;
  if (s == "alternating") return KlSchedule::kAlternating;
  if (s == "once") return KlSchedule::kOncePerToken;
  throw std::invalid_argument("kl_schedule: expected combined, alternating or once, got '" + s + "'");
}

nlohmann::json PPLMConfig::to_json() const {
  return {{"alpha", alpha},       {"p", iterations},     {"gamma", gamma},
          {"kl_scale", kl_scale}, {"gm_scale", gm_scale}, {"grad_floor", grad_floor},
          {"window", window},     {"layers", layers},    {"kl_schedule", kl_schedule_name(kl_schedule)},
          {"pool_context", pool_context}};
}

PPLMConfig PPLMConfig::from_json(const nlohmann::json& j) {
  PPLMConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.iterations = j.value("p", c.iterations);
  c.gamma = j.value("gamma", c.gamma);
  c.kl_scale = j.value("kl_scale", c.kl_scale);
  c.gm_scale = j.value("gm_scale", c.gm_scale);
  c.grad_floor = j.value("grad_floor", c.grad_floor);
  c.window = j.value("window", c.window);
  c.layers = j.value("layers", c.layers);
  c.kl_schedule = parse_kl_schedule(j.value("kl_schedule", std::string("combined")));
  c.pool_context = j.value("pool_context", c.pool_context);
  c.validate();
  return c;
}

PerturbObjective perturb_objective(const PerturbInputs& in, const KVDelta& delta, double attr_weight,
                                   double kl_weight, KVDelta* grad) {
  const TransformerLM& lm = *in.lm;
  const ModelConfig& cfg = lm.config();
  const KVCache& cache = *in.cache;
  if (!delta.same_shape(cache)) throw ShapeError("perturb: delta does not match the cache");
  if (static_cast<int>(in.original.size()) != cfg.vocab) throw ShapeError("perturb: original distribution size");

  ad::Graph g;
  BoundModel bm = bind_model(g, lm.params(), false);
  std::vector<ad::Var> dk, dv, pk, pv;
  for (int l = 0; l < cfg.layers; ++l) {
    dk.push_back(g.leaf(delta.keys[l], true));
    dv.push_back(g.leaf(delta.values[l], true));
    pk.push_back(ad::add(g.borrow(cache.keys[l]), dk.back()));
    pv.push_back(ad::add(g.borrow(cache.values[l]), dv.back()));
  }
  const int tok[1] = {in.token};
  ForwardVars f = forward(g, cfg, bm, tok, pk, pv);

  ad::Var pooled = f.hidden;
  if (in.pool && in.pool->count > 0) {
    pooled = ad::scale(ad::add(g.borrow(in.pool->sum), f.hidden), Scalar(1.0 / (in.pool->count + 1)));
  }
  ad::Var attr = attribute_loss(g, *in.disc, pooled, in.attribute);

  Tensor orig({1, cfg.vocab});
  for (int v = 0; v < cfg.vocab; ++v) orig[v] = static_cast<Scalar>(in.original[v]);
  ad::Var perturbed = ad::softmax(ad::scale(f.logits, Scalar(1.0 / in.temperature)), 1);
  ad::Var kl = ad::kl_divergence(perturbed, g.constant(std::move(orig)));

  PerturbObjective out;
  out.attribute_loss = attr.value()[0];
  out.kl = kl.value()[0];
  if (grad) {
    ad::Var loss = ad::add(ad::scale(attr, Scalar(attr_weight)), ad::scale(kl, Scalar(kl_weight)));
    g.backward(loss);
    *grad = delta.zeros_like();
    for (int l = 0; l < cfg.layers; ++l) {
      if (g.has_grad(dk[l])) grad->keys[l] = g.grad(dk[l]);
      if (g.has_grad(dv[l])) grad->values[l] = g.grad(dv[l]);
    }
  }
  return out;
}

namespace {

// Zeroes gradient entries outside the configured layers / position window.
void apply_masks(KVDelta& grad, const PPLMConfig& cfg) {
  const int layers = grad.layers();
  for (int l = 0; l < layers; ++l) {
    bool keep = cfg.layers.empty();
    for (int x : cfg.layers) keep = keep || x == l;
    for (Tensor* t : {&grad.keys[l], &grad.values[l]}) {
      if (!keep) {
        t->fill(0);
        continue;
      }
      const int rows = t->rows(), cols = t->cols();
      const int first = cfg.window > 0 ? std::max(0, rows - cfg.window) : 0;
      for (int r = 0; r < first; ++r) {
        for (int c = 0; c < cols; ++c) t->at(r, c) = 0;
      }
    }
  }
}

double global_norm(const KVDelta& g) {
  double sq = 0;
  for (int l = 0; l < g.layers(); ++l) {
    for (const Tensor* t : {&g.keys[l], &g.values[l]}) {
      for (Scalar x : t->vec()) sq += static_cast<double>(x) * x;
    }
  }
  return std::sqrt(sq);
}

// delta -= step * grad / max(|grad|, floor)^gamma. Returns false (and leaves
// delta alone) when the gradient is not finite.
bool descend(KVDelta& delta, const KVDelta& grad, double step, const PPLMConfig& cfg, double* norm_out) {
  const double norm = global_norm(grad);
  if (norm_out) *norm_out = norm;
  if (!std::isfinite(norm)) return false;
  const double factor = step / std::pow(std::max(norm, cfg.grad_floor), cfg.gamma);
  for (int l = 0; l < delta.layers(); ++l) {
    for (int kv = 0; kv < 2; ++kv) {
      Tensor& d = kv == 0 ? delta.keys[l] : delta.values[l];
      const Tensor& gr = kv == 0 ? grad.keys[l] : grad.values[l];
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= static_cast<Scalar>(factor * gr[i]);
    }
  }
  return true;
}

}  // namespace

PerturbResult perturb_step(const PerturbInputs& in, KVDelta& delta, const PPLMConfig& cfg, int iteration) {
  if (!in.lm || !in.disc || !in.cache) throw std::invalid_argument("perturb_step: missing model, discriminator or cache");
  PerturbResult r;
  const bool with_kl = cfg.kl_schedule == KlSchedule::kCombined ||
                       (cfg.kl_schedule == KlSchedule::kOncePerToken && iteration == 0);
  KVDelta grad;
  const PerturbObjective obj = perturb_objective(in, delta, 1.0, with_kl ? cfg.kl_scale : 0.0, &grad);
  r.attribute_loss = obj.attribute_loss;
  r.kl = obj.kl;
  apply_masks(grad, cfg);
  const KVDelta saved = delta;
  if (!descend(delta, grad, cfg.alpha, cfg, &r.grad_norm)) {
    r.warning = "non-finite gradient at iteration " + std::to_string(iteration) + "; perturbation rolled back";
    return r;
  }
  if (cfg.kl_schedule == KlSchedule::kAlternating && cfg.kl_scale > 0) {
    KVDelta kl_grad;
    perturb_objective(in, delta, 0.0, 1.0, &kl_grad);
    apply_masks(kl_grad, cfg);
    if (!descend(delta, kl_grad, cfg.alpha * cfg.kl_scale, cfg, nullptr)) {
      delta = saved;
      r.warning = "non-finite KL gradient at iteration " + std::to_string(iteration) + "; perturbation rolled back";
      return r;
    }
  }
  r.applied = true;
  return r;
}

std::vector<double> fuse_distributions(std::span<const double> perturbed, std::span<const double> original,
                                       double gm_scale) {
  if (perturbed.size() != original.size()) throw std::invalid_argument("fuse_distributions: size mismatch");
  if (!(gm_scale >= 0 && gm_scale <= 1)) throw std::invalid_argument("fuse_distributions: gm_scale outside [0,1]");
  if (gm_scale == 1) return {perturbed.begin(), perturbed.end()};
  if (gm_scale == 0) return {original.begin(), original.end()};
  std::vector<double> out(perturbed.size());
  double z = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    z += out[i] = std::pow(perturbed[i], gm_scale) * std::pow(original[i], 1 - gm_scale);
  }
  if (!(z > 0) || !std::isfinite(z)) throw std::domain_error("fuse_distributions: zero normaliser");
  for (auto& x : out) x /= z;
  return out;
}

}  // namespace steerlm
