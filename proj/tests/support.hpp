#pragma once

// Small shared fixtures for the steering, attribute and eval tests.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "steerlm/attribute/discriminator.hpp"
#include "steerlm/model/transformer.hpp"
#include "steerlm/steering/generation.hpp"
#include "steerlm/text/synthetic.hpp"

namespace steerlm::testing {

inline ModelConfig toy_config(int vocab) {
  ModelConfig c;
  c.layers = 2;
  c.width = 16;
  c.heads = 2;
  c.ffn = 32;
  c.vocab = vocab;
  c.window = 48;
  return c;
}

inline Vocab corpus_vocab(const SyntheticCorpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& d : corpus.dialogues) texts.insert(texts.end(), d.turns.begin(), d.turns.end());
  for (const auto& ds : corpus.labeled) {
    for (const auto& e : ds.examples) texts.push_back(e.text);
  }
  return Vocab::build(texts);
}

inline SyntheticCorpus small_corpus(std::uint64_t seed = 1) {
  SyntheticSpec spec = preset_spec("sentiment");
  spec.dialogues = 60;
  spec.labeled_per_class = 100;
  spec.seed = seed;
  return make_synthetic_attribute_corpus(spec);
}

inline Discriminator random_discriminator(int width, std::uint64_t seed, Scalar scale = Scalar(1)) {
  std::mt19937_64 rng(seed);
  Discriminator d;
  d.dataset = "sentiment";
  d.class_names = {"positive", "negative"};
  d.weight = Tensor::randn({width, 2}, rng, scale);
  d.bias = Tensor({2});
  return d;
}

/// Randomly initialised LM over the small corpus vocab plus a random head.
struct ToyWorld {
  SyntheticCorpus corpus;
  Vocab vocab;
  ModelConfig cfg;
  std::unique_ptr<TransformerLM> lm;
  Discriminator disc;

  explicit ToyWorld(std::uint64_t seed = 1, Scalar init_std = Scalar(0.3))
      : corpus(small_corpus(seed)), vocab(corpus_vocab(corpus)), cfg(toy_config(vocab.size())) {
    lm = std::make_unique<TransformerLM>(
        cfg, std::make_shared<const ModelParams>(ModelParams::init(cfg, seed, init_std)));
    disc = random_discriminator(cfg.width, seed + 7);
  }

  SteeringModels models() const { return {lm.get(), &vocab, &disc, nullptr, nullptr}; }

  std::vector<std::vector<std::string>> prefixes(int n) const {
    auto all = moving_window_prefixes(corpus.dialogues, 2);
    all.resize(std::min<std::size_t>(all.size(), n));
    return all;
  }
};

}  // namespace steerlm::testing
