#pragma once

#include <memory>
#include <span>
#include <vector>

#include "steerlm/autodiff/graph.hpp"
#include "steerlm/model/adapter_stack.hpp"
#include "steerlm/model/config.hpp"
#include "steerlm/model/kv_cache.hpp"
#include "steerlm/model/params.hpp"

namespace steerlm {

// Graph-level building blocks, shared by training, PPLM and plain decoding.

struct BoundLayer {
  ad::Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2;
};

struct BoundModel {
  ad::Var token_embedding, position_embedding;
  std::vector<BoundLayer> layers;
  ad::Var final_gain, final_bias, output_weight, output_bias;  // output_bias may be invalid
  /// Leaves in ModelParams::visit order.
  std::vector<ad::Var> leaves;

  /// Mutable handles to the fields above, also in visit order. Lets callers
  /// swap a single parameter for another Var (gradient checks, probes).
  std::vector<ad::Var*> slots();
};

struct BoundAdapter {
  int layer = 0;
  ad::Var ln_gain, ln_bias, w_enc, b_enc, w_dec, b_dec;
};

struct BoundAdapters {
  std::vector<BoundAdapter> layers;
  std::vector<ad::Var> leaves;  // AdapterStack::visit order
  const BoundAdapter* at_layer(int layer) const;
};

/// Parameters are borrowed, never copied: they must outlive the graph.
BoundModel bind_model(ad::Graph& g, const ModelParams& params, bool requires_grad);
BoundAdapters bind_adapters(ad::Graph& g, const AdapterStack& stack, bool requires_grad);

struct ForwardVars {
  ad::Var logits;                      // [T,V]
  ad::Var hidden;                      // [T,d], after the final layer norm
  std::vector<ad::Var> keys, values;   // per layer, [S+T,d] including the past
  std::vector<ad::Var> layer_outputs;  // per layer, [T,d] (after its adapter)
};

/// Runs `tokens` at positions [past_len, past_len + T). `past_keys/values`
/// hold one [past_len,d] Var per layer (empty spans when starting fresh).
ForwardVars forward(ad::Graph& g, const ModelConfig& cfg, const BoundModel& model, std::span<const int> tokens,
                    std::span<const ad::Var> past_keys, std::span<const ad::Var> past_values,
                    const BoundAdapters* adapters = nullptr);

ad::Var adapter_forward(ad::Var x, const BoundAdapter& adapter);

struct StepOutput {
  Tensor hidden;  // [1,d] final hidden o_{t+1}
  Tensor logits;  // [1,V]
  std::vector<Tensor> layer_hidden;
  KVCache cache;  // H_{t+1}
};

struct FullOutput {
  Tensor hidden;  // [T,d]
  Tensor logits;  // [T,V]
  std::vector<Tensor> layer_hidden;
  KVCache cache;
};

struct SequenceLogProb {
  double total = 0.0;
  std::vector<double> per_token;  // log p(x_i | x_<i) for i >= 1
};

/// The frozen base model plus convenience entry points that build and discard
/// a private graph per call. Immutable, so safe to share across threads.
class TransformerLM {
 public:
  TransformerLM(ModelConfig cfg, std::shared_ptr<const ModelParams> params);

  const ModelConfig& config() const { return cfg_; }
  const ModelParams& params() const { return *params_; }
  std::shared_ptr<const ModelParams> shared_params() const { return params_; }

  /// One decoding step. With `delta`, attention reads cache + delta, and the
  /// returned cache is (cache + delta) with the new position appended.
  StepOutput step(int token, const KVCache& cache, const KVDelta* delta = nullptr,
                  const AdapterStack* adapters = nullptr) const;

  /// Processes `tokens` after `past` (empty cache when omitted) in one pass.
  FullOutput forward_full(std::span<const int> tokens, const AdapterStack* adapters = nullptr,
                          const KVCache* past = nullptr) const;

  SequenceLogProb sequence_logprob(std::span<const int> tokens, const AdapterStack* adapters = nullptr) const;

  KVCache empty_cache() const { return KVCache::empty(cfg_.layers, cfg_.width); }

 private:
  ModelConfig cfg_;
  std::shared_ptr<const ModelParams> params_;
};

}  // namespace steerlm
