#pragma once

#include <span>
#include <string>
#include <vector>

#include "steerlm/autodiff/tensor.hpp"
#include "steerlm/text/dialogue.hpp"
#include "steerlm/text/vocab.hpp"

namespace steerlm {

/// Per-class token scores: scores[c][v] is the add-one smoothed log-odds of
/// token v in class c against all other classes. Reserved ids score 0.
struct TokenScores {
  std::string dataset;
  std::vector<std::string> class_names;
  Tensor scores;  // [C,V]

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int vocab_size() const { return scores.empty() ? 0 : scores.dim(1); }
  int class_index(const std::string& name) const;  // "dataset:class" or "class"
  std::span<const Scalar> row(int class_index) const;
};

TokenScores build_token_scores(const Vocab& vocab, const LabeledDataset& data);

struct WDConfig {
  double weight = 0.0;  // w
  void validate() const;
};

void save_token_scores(const std::string& path, const TokenScores& s);
TokenScores load_token_scores(const std::string& path);

}  // namespace steerlm
