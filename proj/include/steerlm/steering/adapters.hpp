#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "steerlm/model/adapter_stack.hpp"
#include "steerlm/model/train.hpp"
#include "steerlm/steering/generation.hpp"

namespace steerlm {

/// One PPLM-generated reply used as adapter supervision.
struct DistillRecord {
  std::vector<std::string> prefix;
  std::vector<int> context;   // encoded history, ends with SEP
  std::vector<int> response;  // without the closing SEP
  double attribute_loss = 0.0;
  std::uint64_t seed = 0;
};

/// D^a: every record was produced by PPLM with `pplm` / `gen` for `attribute`.
struct DistillDataset {
  std::string attribute;
  PPLMConfig pplm;
  GenConfig gen;
  std::vector<DistillRecord> records;
  std::vector<std::string> skipped;  // one message per prefix that failed

  /// First line: metadata; then one record per line.
  void save(const std::string& path) const;
  static DistillDataset load(const std::string& path);
};

using DistillProgress = std::function<void(int done, int total)>;

/// Runs PPLM on `count` prefixes (cycling through them, one seed per record:
/// base seed + index). Prefixes that fail are skipped and logged.
DistillDataset distill(const SteeringModels& models, const std::vector<std::vector<std::string>>& prefixes,
                       const std::string& attribute, const PPLMConfig& pplm, const GenConfig& gen, int count,
                       const DistillProgress& progress = {});

struct AdapterTrainConfig {
  AdapterConfig adapter;
  TrainConfig train{.epochs = 8, .batch_size = 16, .adam = {.lr = 3e-3}};
  /// Keep the lowest-attribute-loss fraction of the records.
  double keep_fraction = 1.0;
  std::uint64_t init_seed = 1;

  nlohmann::json to_json() const;
};

struct AdapterTrainReport {
  TrainResult train;
  std::size_t adapter_params = 0;
  std::size_t base_params = 0;
  double adapter_fraction = 0.0;  // adapter / base
  int records_used = 0;
  std::string lm_checksum;

  nlohmann::json to_json() const;
};

/// [BOS] + context + response + [SEP] with loss only on the response and its
/// closing SEP.
TrainExample response_example(std::span<const int> context, std::span<const int> response);

/// Trains a fresh stack on D^a with the base model frozen (checksum-guarded).
AdapterStack train_adapters(const TransformerLM& lm, const DistillDataset& data, const AdapterTrainConfig& cfg,
                            AdapterTrainReport* report = nullptr, const ProgressFn& progress = {});

/// Mean per-token NLL over response positions; `adapters` may be null.
double response_nll(const TransformerLM& lm, const AdapterStack* adapters, const std::vector<DistillRecord>& records);

}  // namespace steerlm
