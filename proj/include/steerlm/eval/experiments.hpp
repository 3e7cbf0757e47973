#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "steerlm/attribute/bow_classifier.hpp"
#include "steerlm/steering/generation.hpp"

namespace steerlm {

struct SweepConfig {
  std::string attribute;
  std::vector<double> alphas;
  std::vector<int> iterations;  // p values
  std::vector<std::uint64_t> seeds;
  PPLMConfig pplm;  // alpha and p are overridden per cell
  GenConfig gen;
};

struct SweepRow {
  double alpha = 0.0;
  int p = 0;
  std::uint64_t seed = 0;
  bool missing = false;
  std::string error;
  double log_ppl = 0.0;   // mean log perplexity under the scorer
  double clf_loss = 0.0;  // mean external classifier loss
  double ppl_component = 0.0, clf_component = 0.0, sum = 0.0;  // min-max normalised
};

struct SweepCell {
  double alpha = 0.0;
  int p = 0;
  int seeds = 0;  // non-missing rows averaged
  double ppl_component = 0.0, clf_component = 0.0, sum = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;  // alpha-major, then p
  SweepRow baseline;             // unsteered decoding, normalised on the same scale (seed 0 = mean over seeds)

  const SweepCell& cell(double alpha, int p) const;
  /// Header comment records the normalisation; then alpha,p,seed,... rows,
  /// then per-cell means with seed "mean".
  std::string csv() const;
};

using SweepProgress = std::function<void(int done, int total)>;

/// Generates one PP response per prefix for every (alpha, p, seed). Each
/// component is min-max normalised over all non-missing rows before summing.
/// A cell that fails is recorded as missing.
SweepResult sweep_grid(const SteeringModels& models, const std::vector<std::vector<std::string>>& prefixes,
                       const SweepConfig& cfg, const TransformerLM& scorer, const BowClassifier& external,
                       const SweepProgress& progress = {});

struct BenchMethod {
  std::string label;
  GenerationRequest request;  // history and seed are filled per run
  const AdapterStack* adapters = nullptr;
};

struct BenchConfig {
  int tokens = 50;  // forced response length
  int reps = 1;
  int warmup = 1;  // leading runs per method that are not measured
  std::uint64_t seed = 0;
};

struct BenchStats {
  std::string label;
  double mean = 0.0, median = 0.0, p95 = 0.0;  // seconds per token
  long tokens = 0;
  int runs = 0;
};

/// Per-token wall time per method over every prefix. Single-threaded: runs
/// one generation at a time on the calling thread.
std::vector<BenchStats> latency_bench(const SteeringModels& models, const std::vector<BenchMethod>& methods,
                                      const std::vector<std::vector<std::string>>& prefixes, const BenchConfig& cfg);

/// Restricts the calling thread to one CPU. Returns false when unsupported.
bool pin_to_one_cpu();

std::string bench_table(const std::vector<BenchStats>& stats);

}  // namespace steerlm
