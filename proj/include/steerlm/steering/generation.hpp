#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "steerlm/attribute/discriminator.hpp"
#include "steerlm/model/adapter_stack.hpp"
#include "steerlm/model/transformer.hpp"
#include "steerlm/steering/pplm.hpp"
#include "steerlm/steering/weighted_decoding.hpp"
#include "steerlm/text/vocab.hpp"

namespace steerlm {

/// DG: plain decoding. WD: weighted decoding. PP: PPLM. AD: adapters.
/// HM: human reference (records only, never generated).
enum class Method { kDG, kWD, kPP, kAD, kHM };

std::string method_name(Method m);
Method parse_method(const std::string& s);

struct GenConfig {
  int max_length = 20;
  int min_length = 1;  // SEP/EOS are masked until this many tokens exist
  int top_k = 10;
  double temperature = 1.0;
  int candidates = 1;  // > 1 samples that many and keeps the lowest attribute loss
  std::uint64_t seed = 0;

  void validate(int vocab_size = 0) const;
  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
};

struct GenerationRecord {
  Method method = Method::kDG;
  std::vector<std::string> prefix;  // turn texts, oldest first
  std::vector<int> context;         // encoded history actually used (ends with SEP)
  std::vector<int> response;
  std::string response_text;
  std::string attribute;  // "dataset:class"; empty for unsteered DG
  double attribute_loss = 0.0;  // -log p(a|response) under the frozen LM
  std::vector<double> timings;  // seconds per response token
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  bool truncated = false;  // history lost turns to fit the window
  int candidates_considered = 1;
  int selected = 0;
  std::vector<double> candidate_losses;
  std::vector<std::string> candidate_texts;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static GenerationRecord from_json(const nlohmann::json& j);
};

void save_records(const std::string& path, const std::vector<GenerationRecord>& records);
std::vector<GenerationRecord> load_records(const std::string& path);

/// Shared read-only artifacts. Only what the method needs must be set.
struct SteeringModels {
  const TransformerLM* lm = nullptr;
  const Vocab* vocab = nullptr;
  const Discriminator* discriminator = nullptr;  // PP, reranking, attribute_loss
  const TokenScores* token_scores = nullptr;     // WD
  const AdapterStack* adapters = nullptr;        // AD
};

struct GenerationRequest {
  Method method = Method::kDG;
  std::vector<std::string> history;  // turn texts; the last one is the user's
  std::string attribute;
  GenConfig gen;
  PPLMConfig pplm;
  WDConfig wd;
};

/// Encodes the history so that [BOS] + context + max_length tokens fit the
/// window, dropping whole turns from the oldest side.
EncodedHistory prepare_context(const TransformerLM& lm, const Vocab& vocab, const std::vector<std::string>& history,
                               int max_length);

/// One sampled response (no reranking). Consumes exactly one rng draw per
/// emitted token. Fills response, timings and warnings.
struct Decoded {
  std::vector<int> response;
  std::vector<double> timings;
  std::vector<std::string> warnings;
};
Decoded decode_response(const SteeringModels& models, const GenerationRequest& req, std::span<const int> context,
                        std::mt19937_64& rng);

/// Full pipeline: context preparation, `candidates` samples from one rng
/// seeded with gen.seed, reranking and scoring.
GenerationRecord generate(const SteeringModels& models, const GenerationRequest& req);

/// Index of the lowest loss; ties go to the earliest candidate.
int rerank(const std::vector<double>& losses);
int rerank(const std::vector<GenerationRecord>& candidates);

}  // namespace steerlm
