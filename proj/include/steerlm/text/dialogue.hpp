#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerlm/text/vocab.hpp"

namespace steerlm {

enum class Speaker { kUser, kSystem };

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::vector<int> tokens;
};

/// Alternating turns U1, S1, ..., Ut. The encoded form places SEP after every
/// turn, so a trailing SEP means the system speaks next.
struct DialogueHistory {
  std::vector<Turn> turns;

  /// Builds a history from raw turn texts, alternating speakers so that the
  /// final turn belongs to the user.
  static DialogueHistory from_texts(const std::vector<std::string>& texts, const Vocab& vocab);
};

struct EncodedHistory {
  std::vector<int> tokens;
  bool truncated = false;
  int dropped_turns = 0;
};

/// Joins turns with SEP after each. When the result exceeds `window` tokens,
/// whole turns are dropped from the oldest side. Throws if even the newest turn
/// alone does not fit.
EncodedHistory encode_history(const DialogueHistory& history, int window);

/// Raw dialogue: the conversation as turn texts.
struct Dialogue {
  std::int64_t id = -1;
  std::vector<std::string> turns;
};

/// Sentence with a class label; `id` tracks provenance across splits.
struct LabeledExample {
  std::int64_t id = -1;
  std::string text;
  int label = 0;
};

struct LabeledDataset {
  std::string name;                       // e.g. "sentiment"
  std::vector<std::string> class_names;   // index = label
  std::vector<LabeledExample> examples;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Conversation prefixes from a moving window of two turns over each dialogue.
std::vector<std::vector<std::string>> moving_window_prefixes(const std::vector<Dialogue>& dialogues,
                                                             int window = 2);

/// Deterministic split of [0, n) into (train, held-out) index sets.
struct IndexSplit {
  std::vector<int> train;
  std::vector<int> held_out;
};
IndexSplit split_indices(int n, double train_fraction, std::uint64_t seed);

}  // namespace steerlm
