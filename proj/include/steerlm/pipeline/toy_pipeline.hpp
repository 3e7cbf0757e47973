#pragma once

#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "steerlm/attribute/bow_classifier.hpp"
#include "steerlm/attribute/discriminator.hpp"
#include "steerlm/steering/adapters.hpp"
#include "steerlm/steering/generation.hpp"
#include "steerlm/steering/weighted_decoding.hpp"
#include "steerlm/text/synthetic.hpp"

namespace steerlm {

/// Disjoint views of one synthetic corpus, shared by the pipeline and the CLI.
struct CorpusSplits {
  std::vector<Dialogue> generator, scorer, prefix_source;  // consecutive dialogue blocks
  LabeledDataset disc_train, disc_test, external;          // 50/20/30 of the first facet
  std::vector<std::vector<std::string>> train_prefixes, heldout_prefixes;  // 80/20, duplicates dropped
};

CorpusSplits split_corpus(const SyntheticCorpus& corpus, int generator_dialogues, int scorer_dialogues,
                          std::uint64_t seed);
/// Vocabulary over every dialogue turn and labeled sentence.
Vocab build_corpus_vocab(const SyntheticCorpus& corpus);

/// One file per split in `dir` plus splits.json naming the labeled classes.
void save_corpus_splits(const std::string& dir, const CorpusSplits& splits);
CorpusSplits load_corpus_splits(const std::string& dir);

/// Everything needed to rebuild the synthetic end-to-end setup from scratch.
struct ToyPipelineConfig {
  ToyPipelineConfig();

  std::string preset = "sentiment";
  std::uint64_t seed = 1;
  int generator_dialogues = 1000;  // generator LM corpus
  int scorer_dialogues = 500;      // disjoint corpus for the perplexity scorer
  int prefix_dialogues = 500;      // source of conversation prefixes (80/20 split)
  int labeled_per_class = 500;
  ModelConfig model;  // vocab is taken from the corpus
  TrainConfig lm_train{.epochs = 10, .batch_size = 16, .adam = {.lr = 1e-3}};
  TrainConfig scorer_train{.epochs = 10, .batch_size = 16, .adam = {.lr = 1e-3}};
  DiscriminatorTrainConfig discriminator;
  BowTrainConfig external;
  PPLMConfig pplm;        // used to distill; alpha 0.1 by default here
  GenConfig distill_gen;  // 10 reranked candidates by default
  int distill_count = 300;  // per attribute
  AdapterTrainConfig adapters;

  nlohmann::json to_json() const;
  std::string fingerprint() const;
};

/// Frozen-LM checksum observed before and after one stage.
struct ChecksumEvent {
  std::string stage;
  std::string before, after;
};

struct ToyPipeline {
  ToyPipelineConfig cfg;
  SyntheticCorpus corpus;
  Vocab vocab;
  std::unique_ptr<TransformerLM> lm;
  std::unique_ptr<TransformerLM> scorer;
  LabeledDataset disc_train, disc_test, external_data;
  Discriminator discriminator;
  DiscriminatorReport discriminator_report;
  BowClassifier external;
  TokenScores token_scores;
  std::vector<std::vector<std::string>> train_prefixes, heldout_prefixes;
  std::vector<std::string> attributes;  // "dataset:class" for the first facet
  std::map<std::string, DistillDataset> distilled;
  std::map<std::string, AdapterStack> adapters;
  std::map<std::string, AdapterTrainReport> adapter_reports;
  std::vector<ChecksumEvent> checksums;
  bool from_cache = false;

  /// Models for steering toward `attribute` (adapters bound when available).
  SteeringModels models(const std::string& attribute = "") const;
};

using PipelineLog = std::function<void(const std::string&)>;

/// Builds every artifact. With a non-empty `cache_dir`, finished stages are
/// stored under cache_dir/<fingerprint>/ and reused on the next call.
ToyPipeline build_toy_pipeline(const ToyPipelineConfig& cfg, const std::string& cache_dir = "",
                               const PipelineLog& log = {});

}  // namespace steerlm
