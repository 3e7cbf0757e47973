#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "steerlm/model/optim.hpp"
#include "steerlm/text/dialogue.hpp"
#include "steerlm/text/vocab.hpp"

namespace steerlm {

/// Multinomial logistic regression on normalised bag-of-words counts. Serves as
/// the external evaluation classifier and as the corpus separability probe; it
/// shares no weights or features with the LM.
struct BowClassifier {
  std::string dataset;
  std::vector<std::string> class_names;
  Tensor weight;  // [V,C]
  Tensor bias;    // [C]
  std::vector<std::int64_t> train_ids;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int class_index(const std::string& name) const;  // "dataset:class" or "class"
  std::vector<double> probs(std::span<const int> tokens) const;
  int predict(std::span<const int> tokens) const;
};

struct BowTrainConfig {
  int epochs = 40;
  int batch_size = 32;
  AdamConfig adam{.lr = 0.05};
  std::uint64_t seed = 1;
};

BowClassifier train_bow_classifier(const Vocab& vocab, const LabeledDataset& data, const BowTrainConfig& cfg = {});
double bow_accuracy(const BowClassifier& clf, const Vocab& vocab, const LabeledDataset& data);

/// Throws std::logic_error when the two id sets intersect.
void require_disjoint(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b, const std::string& what);

void save_bow_classifier(const std::string& path, const BowClassifier& c);
BowClassifier load_bow_classifier(const std::string& path);

}  // namespace steerlm
