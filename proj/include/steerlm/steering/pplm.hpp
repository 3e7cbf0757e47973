#pragma once

#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "steerlm/attribute/discriminator.hpp"
#include "steerlm/model/kv_cache.hpp"
#include "steerlm/model/transformer.hpp"

namespace steerlm {

enum class KlSchedule {
  kCombined,     // attribute and KL terms share one gradient, every iteration
  kAlternating,  // an attribute step, then a separate KL step, every iteration
  kOncePerToken  // KL term only in the first iteration of each token
};

struct PPLMConfig {
  double alpha = 0.02;     // step size
  int iterations = 10;     // p
  double gamma = 1.0;      // gradient-norm exponent
  double kl_scale = 0.01;  // lambda_KL
  double gm_scale = 0.95;  // gamma_gm
  double grad_floor = 1e-12;
  /// Perturb only the most recent `window` cached positions; 0 = all.
  int window = 0;
  /// Layers whose keys/values are perturbed; empty = all.
  std::vector<int> layers;
  KlSchedule kl_schedule = KlSchedule::kCombined;
  /// Include dialogue-context states in the pooled representation (off: the
  /// attribute describes the response only).
  bool pool_context = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static PPLMConfig from_json(const nlohmann::json& j);
};

std::string kl_schedule_name(KlSchedule s);
KlSchedule parse_kl_schedule(const std::string& s);

/// What the attribute loss pools over besides the state being perturbed: the
/// sum and count of earlier (unperturbed) hidden states.
struct PoolState {
  Tensor sum;  // [1,d]
  int count = 0;
};

/// Objective and update for one perturbation iteration at the current token.
struct PerturbInputs {
  const TransformerLM* lm = nullptr;
  const Discriminator* disc = nullptr;
  AttributeId attribute;
  int token = 0;            // x_t, fed at this step
  const KVCache* cache = nullptr;
  const PoolState* pool = nullptr;
  std::span<const double> original;  // p_{t+1}, unperturbed next-token distribution
  double temperature = 1.0;
};

struct PerturbResult {
  bool applied = false;  // false: gradient was non-finite and delta is unchanged
  double attribute_loss = 0.0;  // at the delta before the update
  double kl = 0.0;
  double grad_norm = 0.0;
  std::string warning;
};

/// One of the p iterations: delta <- delta + alpha * g / max(|g|, eps)^gamma with
/// g the gradient of log p(a|H+delta) - lambda_KL * KL(p~ || p). `iteration`
/// selects the KL schedule behaviour.
PerturbResult perturb_step(const PerturbInputs& in, KVDelta& delta, const PPLMConfig& cfg, int iteration = 0);

/// Differentiable objective value at `delta` (for tests): attribute loss and
/// KL, plus the gradient w.r.t. delta when `grad` is non-null.
struct PerturbObjective {
  double attribute_loss = 0.0;
  double kl = 0.0;
};
PerturbObjective perturb_objective(const PerturbInputs& in, const KVDelta& delta, double attr_weight,
                                   double kl_weight, KVDelta* grad = nullptr);

/// p~^gm * p^(1-gm), renormalised. gm = 1 and gm = 0 return the inputs exactly.
std::vector<double> fuse_distributions(std::span<const double> perturbed, std::span<const double> original,
                                       double gm_scale);

}  // namespace steerlm
