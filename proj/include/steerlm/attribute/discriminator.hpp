#pragma once

#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "steerlm/autodiff/graph.hpp"
#include "steerlm/model/optim.hpp"
#include "steerlm/model/transformer.hpp"
#include "steerlm/text/dialogue.hpp"
#include "steerlm/text/vocab.hpp"

namespace steerlm {

/// Dataset plus class, written "sentiment:positive".
struct AttributeId {
  std::string dataset;
  int class_index = 0;
  std::string class_name;

  std::string str() const { return dataset + ":" + class_name; }
};

/// Linear head p(a|X) = softmax(mean(o) W + b) over final-layer hidden states.
struct Discriminator {
  std::string dataset;
  std::vector<std::string> class_names;
  Tensor weight;  // [d,C]
  Tensor bias;    // [C]
  std::vector<std::int64_t> train_ids;  // provenance, for disjointness checks

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int width() const { return weight.empty() ? 0 : weight.dim(0); }
  /// Accepts "dataset:class" or a bare class name. Unknown names throw
  /// std::out_of_range listing the valid ones.
  AttributeId attribute(const std::string& name) const;
  std::uint64_t checksum() const;
};

/// Mean over time: [t,d] -> [1,d].
ad::Var pool_hidden(ad::Var hidden);
/// Same, skipping rows whose token is PAD.
ad::Var pool_hidden(ad::Var hidden, std::span<const int> tokens);

ad::Var discriminator_logits(ad::Graph& g, const Discriminator& d, ad::Var pooled);  // [1,C]
/// -log p(a | pooled).
ad::Var attribute_loss(ad::Graph& g, const Discriminator& d, ad::Var pooled, const AttributeId& a);
std::vector<double> class_probs(const Discriminator& d, const Tensor& pooled);

/// Final hidden states of `response` read after [BOS] + context, mean-pooled
/// over the response positions only.
Tensor response_features(const TransformerLM& lm, std::span<const int> context, std::span<const int> response);
/// Internal attribute loss of a finished response (unperturbed model).
double score_response(const TransformerLM& lm, const Discriminator& d, std::span<const int> context,
                      std::span<const int> response, const AttributeId& a);

struct DiscriminatorTrainConfig {
  int epochs = 30;
  int batch_size = 32;
  AdamConfig adam{.lr = 1e-2};
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
};

struct DiscriminatorReport {
  double train_f1 = 0, test_f1 = 0;
  double train_accuracy = 0, test_accuracy = 0;
  std::vector<double> epoch_loss;
  std::string lm_checksum;

  nlohmann::json to_json() const;
};

/// Sentence features are the pooled hidden states of [BOS] + sentence. Only the
/// head is trained; the LM checksum is compared before and after.
Discriminator train_discriminator(const TransformerLM& lm, const Vocab& vocab, const LabeledDataset& train,
                                  const LabeledDataset& test, const DiscriminatorTrainConfig& cfg,
                                  DiscriminatorReport* report = nullptr);

std::vector<int> predict(const Discriminator& d, const std::vector<Tensor>& features);
double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred, int classes);

void save_discriminator(const std::string& path, const Discriminator& d, const nlohmann::json& extra = {});
Discriminator load_discriminator(const std::string& path);

}  // namespace steerlm
