#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <stdexcept>
#include <utility>
#include <vector>

#include "steerlm/autodiff/graph.hpp"
#include "steerlm/model/config.hpp"
#include "steerlm/model/optim.hpp"
#include "steerlm/model/params.hpp"
#include "steerlm/text/dialogue.hpp"

namespace steerlm {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  AdamConfig adam;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<double> step_loss;   // batch loss before each update
  std::vector<double> epoch_loss;  // mean of step losses per epoch
  double initial_nll = 0.0;        // corpus mean NLL before training
  double final_nll = 0.0;          // and after

  nlohmann::json to_json() const;
};

/// NaN/Inf loss or gradient. The message carries epoch, step and the values seen.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Next-token example: targets[i] is predicted from inputs[0..i]. Targets of -1
/// are masked out (no loss).
struct TrainExample {
  std::vector<int> inputs;
  std::vector<int> targets;

  static TrainExample shifted(const std::vector<int>& tokens);
  int counted() const;
};

using ProgressFn = std::function<void(int epoch, int step, double loss)>;

/// Builds logits [T,V] for `inputs` on `g` and returns them together with the
/// leaves to differentiate, in the same order as the trained tensors.
using LogitsBuilder = std::function<std::pair<ad::Var, std::vector<ad::Var>>(ad::Graph& g, const TrainExample& ex)>;

/// Mini-batch Adam over `params`. Each batch loss is the token-weighted mean
/// NLL, so every counted target has equal weight.
TrainResult run_training(const std::vector<Tensor*>& params, const std::vector<TrainExample>& examples,
                         const TrainConfig& cfg, const LogitsBuilder& build, const ProgressFn& progress = {});

/// Mean per-token NLL of `examples` under the given builder (no gradients).
double mean_nll(const std::vector<TrainExample>& examples, const LogitsBuilder& build);

/// Full-parameter LM training. Refuses frozen parameters.
TrainResult train_lm(const ModelConfig& cfg, ModelParams& params, const std::vector<std::vector<int>>& sequences,
                     const TrainConfig& tc, const ProgressFn& progress = {});

double lm_mean_nll(const ModelConfig& cfg, const ModelParams& params, const std::vector<std::vector<int>>& sequences);

/// [BOS] + encoded dialogue, whole oldest turns dropped to fit the window.
std::vector<std::vector<int>> dialogue_sequences(const std::vector<Dialogue>& dialogues, const Vocab& vocab,
                                                 int window);

}  // namespace steerlm
