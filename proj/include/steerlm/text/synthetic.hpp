#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerlm/text/dialogue.hpp"

namespace steerlm {

/// One attribute dataset of the synthetic world, e.g. sentiment with
/// {positive, negative}. Each class owns a partition of words.
struct FacetSpec {
  std::string name;
  std::vector<std::string> class_names;
  int words_per_class = 20;
  /// Fraction of each partition drawn from a pool shared by all classes.
  double shared_fraction = 0.0;
};

struct SyntheticSpec {
  std::vector<FacetSpec> facets;
  int neutral_words = 60;
  int vocab_cap = 2000;

  int labeled_per_class = 500;
  int labeled_min_len = 5;
  int labeled_max_len = 10;
  /// Per-position chance of a class word in labeled sentences (at least one is
  /// always present).
  double labeled_class_rate = 0.3;

  int dialogues = 1000;
  int min_turns = 3;
  int max_turns = 5;
  int turn_min_len = 5;
  int turn_max_len = 9;
  /// Per-position chance of an attribute word inside dialogue turns.
  double dialogue_class_rate = 0.25;
  /// Chance that a turn keeps the previous turn's class for a facet.
  double context_agreement = 0.75;

  std::uint64_t seed = 1;
};

/// Presets: "sentiment" (positive/negative), "act" (question/statement),
/// "topic" (business/scitech/sport/world), or "all" for the three together.
SyntheticSpec preset_spec(const std::string& name);

struct SyntheticCorpus {
  std::vector<std::string> neutral_words;
  /// partitions[facet][class] = words of that class.
  std::vector<std::vector<std::vector<std::string>>> partitions;
  std::vector<LabeledDataset> labeled;  // one per facet
  std::vector<Dialogue> dialogues;
};

/// Deterministic in `spec.seed`. Throws std::invalid_argument when the word
/// partitions do not fit in `vocab_cap`.
SyntheticCorpus make_synthetic_attribute_corpus(const SyntheticSpec& spec);

/// Seeded shuffle split into two disjoint parts; ids never appear in both.
std::pair<LabeledDataset, LabeledDataset> split_labeled(const LabeledDataset& data, double first_fraction,
                                                        std::uint64_t seed);

}  // namespace steerlm
