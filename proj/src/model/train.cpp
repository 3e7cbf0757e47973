#include "steerlm/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "steerlm/autodiff/ops.hpp"
#include "steerlm/model/transformer.hpp"

namespace steerlm {

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"seed", seed}, {"adam", adam.to_json()}};
}

nlohmann::json TrainResult::to_json() const {
  return {{"initial_nll", initial_nll}, {"final_nll", final_nll}, {"epoch_loss", epoch_loss},
          {"steps", step_loss.size()}};
}

TrainExample TrainExample::shifted(const std::vector<int>& tokens) {
  if (tokens.size() < 2) throw std::invalid_argument("training sequence needs at least two tokens");
  return {std::vector<int>(tokens.begin(), tokens.end() - 1), std::vector<int>(tokens.begin() + 1, tokens.end())};
}

int TrainExample::counted() const {
  return static_cast<int>(std::count_if(targets.begin(), targets.end(), [](int t) { return t >= 0; }));
}

TrainResult run_training(const std::vector<Tensor*>& params, const std::vector<TrainExample>& examples,
                         const TrainConfig& cfg, const LogitsBuilder& build, const ProgressFn& progress) {
  if (examples.empty()) throw std::invalid_argument("training set is empty");
  if (cfg.epochs < 0 || cfg.batch_size < 1) throw std::invalid_argument("bad epochs / batch size");
  for (const auto& ex : examples) {
    if (ex.inputs.size() != ex.targets.size()) throw std::invalid_argument("inputs and targets differ in length");
  }
  TrainResult result;
  result.initial_nll = mean_nll(examples, build);
  Adam adam(cfg.adam, params);
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> grads;
  for (Tensor* p : params) grads.emplace_back(p->shape());

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      int batch_tokens = 0;
      for (std::size_t i = start; i < end; ++i) batch_tokens += examples[order[i]].counted();
      if (batch_tokens == 0) continue;
      for (auto& gr : grads) gr.fill(0);
      double batch_loss = 0;
      for (std::size_t i = start; i < end; ++i) {
        const TrainExample& ex = examples[order[i]];
        const int n = ex.counted();
        if (n == 0) continue;
        ad::Graph g;
        auto [logits, leaves] = build(g, ex);
        if (leaves.size() != params.size()) throw std::logic_error("builder returned the wrong number of leaves");
        const double w = static_cast<double>(n) / batch_tokens;
        ad::Var loss = ad::scale(ad::cross_entropy(logits, ex.targets), static_cast<Scalar>(w));
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) {
          std::ostringstream msg;
          msg << "training diverged: non-finite loss at epoch " << epoch << ", step " << step << " (example "
              << order[i] << ", loss " << lv << ")";
          throw DivergenceError(msg.str());
        }
        batch_loss += lv;
        g.backward(loss);
        for (std::size_t k = 0; k < leaves.size(); ++k) {
          if (!g.has_grad(leaves[k])) continue;
          const Tensor& lg = g.grad(leaves[k]);
          for (std::size_t j = 0; j < lg.size(); ++j) grads[k][j] += lg[j];
        }
      }
      for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!grads[k].all_finite()) {
          std::ostringstream msg;
          msg << "training diverged: non-finite gradient for tensor " << k << " at epoch " << epoch << ", step "
              << step << " (batch loss " << batch_loss << ")";
          throw DivergenceError(msg.str());
        }
      }
      adam.step(grads);
      result.step_loss.push_back(batch_loss);
      epoch_sum += batch_loss;
      ++epoch_steps;
      if (progress) progress(epoch, step, batch_loss);
      ++step;
    }
    result.epoch_loss.push_back(epoch_steps ? epoch_sum / epoch_steps : 0.0);
  }
  result.final_nll = mean_nll(examples, build);
  return result;
}

double mean_nll(const std::vector<TrainExample>& examples, const LogitsBuilder& build) {
  double total = 0;
  long count = 0;
  for (const auto& ex : examples) {
    const int n = ex.counted();
    if (n == 0) continue;
    ad::Graph g;
    auto built = build(g, ex);
    total += static_cast<double>(ad::cross_entropy(built.first, ex.targets).value()[0]) * n;
    count += n;
  }
  if (count == 0) throw std::invalid_argument("no counted targets");
  return total / static_cast<double>(count);
}

namespace {

LogitsBuilder lm_builder(const ModelConfig& cfg, const ModelParams& params, bool requires_grad) {
  return [&cfg, &params, requires_grad](ad::Graph& g, const TrainExample& ex) {
    BoundModel bm = bind_model(g, params, requires_grad);
    ForwardVars f = forward(g, cfg, bm, ex.inputs, {}, {});
    return std::make_pair(f.logits, bm.leaves);
  };
}

std::vector<TrainExample> to_examples(const std::vector<std::vector<int>>& sequences) {
  std::vector<TrainExample> ex;
  ex.reserve(sequences.size());
  for (const auto& s : sequences) ex.push_back(TrainExample::shifted(s));
  return ex;
}

}  // namespace

TrainResult train_lm(const ModelConfig& cfg, ModelParams& params, const std::vector<std::vector<int>>& sequences,
                     const TrainConfig& tc, const ProgressFn& progress) {
  if (params.frozen) throw std::logic_error("train_lm: parameters are frozen");
  if (sequences.empty()) throw std::invalid_argument("train_lm: corpus is empty");
  std::vector<Tensor*> tensors;
  params.visit([&](const std::string&, Tensor& t) { tensors.push_back(&t); });
  return run_training(tensors, to_examples(sequences), tc, lm_builder(cfg, params, true), progress);
}

double lm_mean_nll(const ModelConfig& cfg, const ModelParams& params, const std::vector<std::vector<int>>& sequences) {
  return mean_nll(to_examples(sequences), lm_builder(cfg, params, false));
}

std::vector<std::vector<int>> dialogue_sequences(const std::vector<Dialogue>& dialogues, const Vocab& vocab,
                                                 int window) {
  std::vector<std::vector<int>> out;
  for (const auto& d : dialogues) {
    if (d.turns.empty()) continue;
    const EncodedHistory enc = encode_history(DialogueHistory::from_texts(d.turns, vocab), window);
    std::vector<int> s{Vocab::kBos};
    s.insert(s.end(), enc.tokens.begin(), enc.tokens.end());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace steerlm
