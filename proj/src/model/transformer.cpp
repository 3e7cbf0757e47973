#include "steerlm/model/transformer.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "steerlm/autodiff/ops.hpp"

namespace steerlm {

using ad::Graph;
using ad::Var;

BoundModel bind_model(Graph& g, const ModelParams& params, bool requires_grad) {
  BoundModel m;
  auto b = [&](const Tensor& t) {
    Var v = g.borrow(t, requires_grad);
    m.leaves.push_back(v);
    return v;
  };
  m.token_embedding = b(params.token_embedding);
  m.position_embedding = b(params.position_embedding);
  for (const auto& l : params.layers) {
    BoundLayer bl;
    bl.ln1_gain = b(l.ln1_gain);
    bl.ln1_bias = b(l.ln1_bias);
    bl.wq = b(l.wq);
    bl.bq = b(l.bq);
    bl.wk = b(l.wk);
    bl.bk = b(l.bk);
    bl.wv = b(l.wv);
    bl.bv = b(l.bv);
    bl.wo = b(l.wo);
    bl.bo = b(l.bo);
    bl.ln2_gain = b(l.ln2_gain);
    bl.ln2_bias = b(l.ln2_bias);
    bl.w1 = b(l.w1);
    bl.b1 = b(l.b1);
    bl.w2 = b(l.w2);
    bl.b2 = b(l.b2);
    m.layers.push_back(bl);
  }
  m.final_gain = b(params.final_gain);
  m.final_bias = b(params.final_bias);
  m.output_weight = b(params.output_weight);
  if (!params.output_bias.empty()) m.output_bias = b(params.output_bias);
  return m;
}

std::vector<Var*> BoundModel::slots() {
  std::vector<Var*> out{&token_embedding, &position_embedding};
  for (auto& l : layers) {
    for (Var* v : {&l.ln1_gain, &l.ln1_bias, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln2_gain,
                   &l.ln2_bias, &l.w1, &l.b1, &l.w2, &l.b2}) {
      out.push_back(v);
    }
  }
  out.insert(out.end(), {&final_gain, &final_bias, &output_weight});
  if (output_bias.valid()) out.push_back(&output_bias);
  return out;
}

BoundAdapters bind_adapters(Graph& g, const AdapterStack& stack, bool requires_grad) {
  BoundAdapters out;
  auto b = [&](const Tensor& t) {
    Var v = g.borrow(t, requires_grad);
    out.leaves.push_back(v);
    return v;
  };
  for (const auto& l : stack.layers) {
    BoundAdapter a;
    a.layer = l.layer;
    a.ln_gain = b(l.ln_gain);
    a.ln_bias = b(l.ln_bias);
    a.w_enc = b(l.w_enc);
    a.b_enc = b(l.b_enc);
    a.w_dec = b(l.w_dec);
    a.b_dec = b(l.b_dec);
    out.layers.push_back(a);
  }
  return out;
}

const BoundAdapter* BoundAdapters::at_layer(int layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return &l;
  }
  return nullptr;
}

Var adapter_forward(Var x, const BoundAdapter& a) {
  Var h = ad::layer_norm(x, a.ln_gain, a.ln_bias);
  Var z = ad::relu(ad::linear(h, a.w_enc, a.b_enc));
  return ad::add(x, ad::linear(z, a.w_dec, a.b_dec));
}

ForwardVars forward(Graph& /*g*/, const ModelConfig& cfg, const BoundModel& model, std::span<const int> tokens,
                    std::span<const Var> past_keys, std::span<const Var> past_values, const BoundAdapters* adapters) {
  const int t = static_cast<int>(tokens.size());
  if (t == 0) throw std::invalid_argument("forward: no tokens");
  const bool has_past = !past_keys.empty();
  if (has_past && (static_cast<int>(past_keys.size()) != cfg.layers ||
                   static_cast<int>(past_values.size()) != cfg.layers)) {
    throw ShapeError("forward: past cache has " + std::to_string(past_keys.size()) + " layers, model has " +
                     std::to_string(cfg.layers));
  }
  const int past_len = has_past ? past_keys[0].value().rows() : 0;
  if (past_len + t > cfg.window) {
    throw std::length_error("forward: " + std::to_string(past_len + t) + " positions exceed the context window of " +
                            std::to_string(cfg.window));
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg.vocab) throw std::out_of_range("forward: token id " + std::to_string(id) + " not in vocab");
  }

  ForwardVars out;
  Var x = ad::add(ad::embedding(model.token_embedding, tokens),
                  ad::slice(model.position_embedding, 0, past_len, past_len + t));
  for (int i = 0; i < cfg.layers; ++i) {
    const BoundLayer& l = model.layers[i];
    Var h = ad::layer_norm(x, l.ln1_gain, l.ln1_bias);
    Var q = ad::linear(h, l.wq, l.bq);
    Var k = ad::linear(h, l.wk, l.bk);
    Var v = ad::linear(h, l.wv, l.bv);
    if (has_past && past_len > 0) {
      const std::array<Var, 2> ks{past_keys[i], k};
      const std::array<Var, 2> vs{past_values[i], v};
      k = ad::concat(ks, 0);
      v = ad::concat(vs, 0);
    }
    out.keys.push_back(k);
    out.values.push_back(v);
    Var attn = ad::causal_attention(q, k, v, cfg.heads);
    x = ad::add(x, ad::linear(attn, l.wo, l.bo));
    Var h2 = ad::layer_norm(x, l.ln2_gain, l.ln2_bias);
    Var f = ad::linear(ad::relu(ad::linear(h2, l.w1, l.b1)), l.w2, l.b2);
    x = ad::add(x, f);
    if (adapters) {
      if (const BoundAdapter* a = adapters->at_layer(i)) x = adapter_forward(x, *a);
    }
    out.layer_outputs.push_back(x);
  }
  out.hidden = ad::layer_norm(x, model.final_gain, model.final_bias);
  out.logits = model.output_bias.valid() ? ad::linear(out.hidden, model.output_weight, model.output_bias)
                                         : ad::matmul(out.hidden, model.output_weight);
  return out;
}

TransformerLM::TransformerLM(ModelConfig cfg, std::shared_ptr<const ModelParams> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  if (!params_) throw std::invalid_argument("TransformerLM: null parameters");
  if (static_cast<int>(params_->layers.size()) != cfg_.layers ||
      params_->token_embedding.shape() != Shape{cfg_.vocab, cfg_.width}) {
    throw ShapeError("TransformerLM: parameters do not match the model config");
  }
}

StepOutput TransformerLM::step(int token, const KVCache& cache, const KVDelta* delta,
                               const AdapterStack* adapters) const {
  if (cache.layers() != cfg_.layers) throw ShapeError("step: cache layer count does not match the model");
  if (cache.length() >= cfg_.window) {
    throw std::length_error("step: cache already fills the context window of " + std::to_string(cfg_.window));
  }
  if (delta && !delta->same_shape(cache)) throw ShapeError("step: perturbation shape does not match the cache");
  Graph g;
  BoundModel bm = bind_model(g, *params_, false);
  std::vector<Var> pk, pv;
  for (int i = 0; i < cfg_.layers; ++i) {
    Var k = g.borrow(cache.keys[i]);
    Var v = g.borrow(cache.values[i]);
    if (delta) {
      k = ad::add(k, g.borrow(delta->keys[i]));
      v = ad::add(v, g.borrow(delta->values[i]));
    }
    pk.push_back(k);
    pv.push_back(v);
  }
  std::optional<BoundAdapters> ba;
  if (adapters) ba = bind_adapters(g, *adapters, false);
  const int tok[1] = {token};
  ForwardVars f = forward(g, cfg_, bm, tok, pk, pv, ba ? &*ba : nullptr);
  StepOutput out;
  out.hidden = f.hidden.value();
  out.logits = f.logits.value();
  for (Var v : f.layer_outputs) out.layer_hidden.push_back(v.value());
  for (int i = 0; i < cfg_.layers; ++i) {
    out.cache.keys.push_back(f.keys[i].value());
    out.cache.values.push_back(f.values[i].value());
  }
  return out;
}

FullOutput TransformerLM::forward_full(std::span<const int> tokens, const AdapterStack* adapters,
                                       const KVCache* past) const {
  Graph g;
  BoundModel bm = bind_model(g, *params_, false);
  std::vector<Var> pk, pv;
  if (past && past->length() > 0) {
    if (past->layers() != cfg_.layers) throw ShapeError("forward_full: cache layer count does not match the model");
    for (int i = 0; i < cfg_.layers; ++i) {
      pk.push_back(g.borrow(past->keys[i]));
      pv.push_back(g.borrow(past->values[i]));
    }
  }
  std::optional<BoundAdapters> ba;
  if (adapters) ba = bind_adapters(g, *adapters, false);
  ForwardVars f = forward(g, cfg_, bm, tokens, pk, pv, ba ? &*ba : nullptr);
  FullOutput out;
  out.hidden = f.hidden.value();
  out.logits = f.logits.value();
  for (Var v : f.layer_outputs) out.layer_hidden.push_back(v.value());
  for (int i = 0; i < cfg_.layers; ++i) {
    out.cache.keys.push_back(f.keys[i].value());
    out.cache.values.push_back(f.values[i].value());
  }
  return out;
}

SequenceLogProb TransformerLM::sequence_logprob(std::span<const int> tokens, const AdapterStack* adapters) const {
  if (tokens.size() < 2) throw std::invalid_argument("sequence_logprob: need at least two tokens");
  for (int id : tokens) {
    if (id < 0 || id >= cfg_.vocab) {
      throw std::out_of_range("sequence_logprob: token id " + std::to_string(id) + " not in vocab");
    }
  }
  FullOutput f = forward_full(tokens.first(tokens.size() - 1), adapters);
  const int v = cfg_.vocab;
  SequenceLogProb out;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const Scalar* row = f.logits.data() + i * v;
    double mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0;
    for (int j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double lp = static_cast<double>(row[tokens[i + 1]]) - mx - std::log(z);
    out.per_token.push_back(lp);
    out.total += lp;
  }
  return out;
}

}  // namespace steerlm
