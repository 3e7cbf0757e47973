#pragma once

#include <json.hpp>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "steerlm/attribute/bow_classifier.hpp"
#include "steerlm/attribute/discriminator.hpp"
#include "steerlm/model/transformer.hpp"
#include "steerlm/steering/generation.hpp"

namespace steerlm {

/// exp(mean NLL) of context + response under the scorer, every token after BOS
/// counted. The scorer must be a separately trained model.
double perplexity(const TransformerLM& scorer, std::span<const int> context, std::span<const int> response);

struct DistinctResult {
  double ratio = 0.0;  // unique / total (0 when nothing was counted)
  long unique = 0;
  long total = 0;
  int skipped = 0;  // responses shorter than n

  std::string coverage_note() const;
};

/// Distinct n-grams across all responses over all n-gram occurrences.
DistinctResult distinct_n(const std::vector<std::vector<int>>& responses, int n);

/// Fraction of responses the external classifier assigns to `attribute`.
double external_score(const BowClassifier& clf, const std::vector<std::vector<int>>& responses,
                      const std::string& attribute);
/// -log p_clf(attribute | response), averaged.
double external_loss(const BowClassifier& clf, const std::vector<std::vector<int>>& responses,
                     const std::string& attribute);

struct EvalRow {
  std::string method;
  std::string attribute;
  int count = 0;
  double ppl = 0.0;  // mean of per-response perplexities
  double dist1 = 0.0, dist2 = 0.0, dist3 = 0.0;
  double discrim = 0.0;   // internal discriminator accuracy
  double external = 0.0;  // external classifier accuracy
  double attribute_loss = 0.0;
  double ms_per_token = 0.0;
  std::string coverage;
};

struct MethodSummary {
  std::string method;
  double ppl = 0.0;
  double dist1 = 0.0, dist2 = 0.0, dist3 = 0.0;
  double discrim = 0.0;
  double score = 0.0;  // mean over attributes of external accuracy
  double ms_per_token = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // method x attribute, in first-seen order
  std::vector<MethodSummary> methods;

  const MethodSummary& method(const std::string& name) const;
  const EvalRow& row(const std::string& method, const std::string& attribute) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

struct EvalModels {
  const TransformerLM* lm = nullptr;      // generator, for the internal discriminator
  const TransformerLM* scorer = nullptr;  // perplexity
  const Discriminator* discriminator = nullptr;
  const BowClassifier* external = nullptr;
};

/// Pure function of the records and models. Records without an attribute are
/// skipped (nothing to score against).
EvalReport evaluate(const std::vector<GenerationRecord>& records, const EvalModels& models);

}  // namespace steerlm
