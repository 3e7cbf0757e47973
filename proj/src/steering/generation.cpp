#include "steerlm/steering/generation.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "steerlm/model/sampling.hpp"
#include "steerlm/text/dialogue.hpp"

namespace steerlm {

std::string method_name(Method m) {
  switch (m) {
    case Method::kDG: return "DG";
    case Method::kWD: return "WD";
    case Method::kPP: return "PP";
    case Method::kAD: return "AD";
    case Method::kHM: return "HM";
  }
  return "DG";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::kDG, Method::kWD, Method::kPP, Method::kAD, Method::kHM}) {
    if (s == method_name(m)) return m;
  }
  throw std::invalid_argument("method: expected DG, WD, PP, AD or HM, got '" + s + "'");
}

void GenConfig::validate(int vocab_size) const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (max_length < 1) bad("max_length", "must be >= 1");
  if (min_length < 0 || min_length > max_length) bad("min_length", "must lie in [0, max_length]");
  if (top_k < 1) bad("top_k", "must be >= 1");
  if (vocab_size > 0 && top_k > vocab_size) bad("top_k", "must be <= vocab size " + std::to_string(vocab_size));
  if (!(temperature > 0) || !std::isfinite(temperature)) bad("temperature", "must be > 0");
  if (candidates < 1) bad("candidates", "must be >= 1");
}

nlohmann::json GenConfig::to_json() const {
  return {{"max_length", max_length}, {"min_length", min_length}, {"top_k", top_k},
          {"temperature", temperature}, {"candidates", candidates}, {"seed", seed}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  GenConfig c;
  c.max_length = j.value("max_length", c.max_length);
  c.min_length = j.value("min_length", c.min_length);
  c.top_k = j.value("top_k", c.top_k);
  c.temperature = j.value("temperature", c.temperature);
  c.candidates = j.value("candidates", c.candidates);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json GenerationRecord::to_json() const {
  return {{"method", method_name(method)},
          {"prefix", prefix},
          {"context", context},
          {"response", response},
          {"response_text", response_text},
          {"attribute", attribute},
          {"attribute_loss", attribute_loss},
          {"timings", timings},
          {"seed", seed},
          {"config", config},
          {"truncated", truncated},
          {"candidates_considered", candidates_considered},
          {"selected", selected},
          {"candidate_losses", candidate_losses},
          {"candidate_texts", candidate_texts},
          {"warnings", warnings}};
}

GenerationRecord GenerationRecord::from_json(const nlohmann::json& j) {
  GenerationRecord r;
  r.method = parse_method(j.at("method").get<std::string>());
  r.prefix = j.value("prefix", r.prefix);
  r.context = j.value("context", r.context);
  r.response = j.at("response").get<std::vector<int>>();
  r.response_text = j.value("response_text", r.response_text);
  r.attribute = j.value("attribute", r.attribute);
  r.attribute_loss = j.value("attribute_loss", r.attribute_loss);
  r.timings = j.value("timings", r.timings);
  r.seed = j.value("seed", r.seed);
  r.config = j.value("config", r.config);
  r.truncated = j.value("truncated", r.truncated);
  r.candidates_considered = j.value("candidates_considered", r.candidates_considered);
  r.selected = j.value("selected", r.selected);
  r.candidate_losses = j.value("candidate_losses", r.candidate_losses);
  r.candidate_texts = j.value("candidate_texts", r.candidate_texts);
  r.warnings = j.value("warnings", r.warnings);
  if (r.method != Method::kHM && r.timings.size() != r.response.size()) {
    throw std::invalid_argument("record: timings length " + std::to_string(r.timings.size()) +
                                " differs from response length " + std::to_string(r.response.size()));
  }
  return r;
}

void save_records(const std::string& path, const std::vector<GenerationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<GenerationRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<GenerationRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(GenerationRecord::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

EncodedHistory prepare_context(const TransformerLM& lm, const Vocab& vocab, const std::vector<std::string>& history,
                               int max_length) {
  if (history.empty()) throw std::invalid_argument("generation: empty dialogue history");
  const int budget = lm.config().window - 1 - max_length;
  if (budget < 1) {
    throw std::invalid_argument("generation: max_length " + std::to_string(max_length) +
                                " leaves no room for history in a window of " + std::to_string(lm.config().window));
  }
  return encode_history(DialogueHistory::from_texts(history, vocab), budget);
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr Scalar kMasked = -std::numeric_limits<Scalar>::infinity();

// Reserved ids are never sampled; SEP/EOS are allowed once the response is long
// enough.
void mask_logits(Tensor& logits, int produced, int min_length) {
  Scalar* l = logits.data();
  l[Vocab::kPad] = kMasked;
  l[Vocab::kBos] = kMasked;
  l[Vocab::kUnk] = kMasked;
  if (produced < min_length) {
    l[Vocab::kSep] = kMasked;
    l[Vocab::kEos] = kMasked;
  }
}

bool is_stop(int token) { return token == Vocab::kSep || token == Vocab::kEos; }

// Cache over [BOS] + context minus its final SEP, which the first step feeds.
FullOutput prime(const TransformerLM& lm, std::span<const int> context, const AdapterStack* adapters) {
  std::vector<int> tokens{Vocab::kBos};
  tokens.insert(tokens.end(), context.begin(), context.end() - 1);
  return lm.forward_full(tokens, adapters);
}

void add_row(Tensor& sum, const Tensor& rows, int r) {
  const int d = rows.cols();
  for (int c = 0; c < d; ++c) sum[c] += rows.at(r, c);
}

Decoded decode_plain(const SteeringModels& m, const GenerationRequest& req, std::span<const int> context,
                     std::mt19937_64& rng) {
  const TransformerLM& lm = *m.lm;
  const AdapterStack* adapters = req.method == Method::kAD ? m.adapters : nullptr;
  std::span<const Scalar> bonus;
  if (req.method == Method::kWD && req.wd.weight != 0) {
    bonus = m.token_scores->row(m.token_scores->class_index(req.attribute));
  }
  Decoded out;
  KVCache cache = prime(lm, context, adapters).cache;
  int last = context.back();
  for (int j = 0; j < req.gen.max_length; ++j) {
    const auto t0 = Clock::now();
    StepOutput s = lm.step(last, cache, nullptr, adapters);
    if (!bonus.empty()) {
      for (std::size_t v = 0; v < bonus.size(); ++v) s.logits[v] += static_cast<Scalar>(req.wd.weight) * bonus[v];
    }
    mask_logits(s.logits, j, req.gen.min_length);
    const int tok = sample_topk(s.logits.vec(), req.gen.top_k, req.gen.temperature, rng);
    cache = std::move(s.cache);
    out.timings.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    if (is_stop(tok)) {
      out.timings.pop_back();  // the stop step is not a response token
      break;
    }
    out.response.push_back(tok);
    last = tok;
  }
  return out;
}

Decoded decode_pplm(const SteeringModels& m, const GenerationRequest& req, std::span<const int> context,
                    std::mt19937_64& rng) {
  const TransformerLM& lm = *m.lm;
  const PPLMConfig& cfg = req.pplm;
  const AttributeId attr = m.discriminator->attribute(req.attribute);
  const int width = lm.config().width;

  Decoded out;
  FullOutput primed = prime(lm, context, nullptr);
  KVCache cache_u = primed.cache;
  KVCache cache_p = std::move(primed.cache);
  PoolState pool{Tensor({1, width}), 0};
  if (cfg.pool_context) {
    // Context rows after BOS; the SEP row joins after the first step.
    for (int r = 1; r < primed.hidden.rows(); ++r) add_row(pool.sum, primed.hidden, r);
    pool.count = primed.hidden.rows() - 1;
  }
  int last = context.back();
  for (int j = 0; j < req.gen.max_length; ++j) {
    const auto t0 = Clock::now();
    StepOutput su = lm.step(last, cache_u);
    const std::vector<double> original = softmax(su.logits.vec(), req.gen.temperature);

    KVDelta delta = cache_p.zeros_like();
    PerturbInputs in;
    in.lm = &lm;
    in.disc = m.discriminator;
    in.attribute = attr;
    in.token = last;
    in.cache = &cache_p;
    in.pool = &pool;
    in.original = original;
    in.temperature = req.gen.temperature;
    for (int it = 0; it < cfg.iterations; ++it) {
      PerturbResult r = perturb_step(in, delta, cfg, it);
      if (!r.warning.empty()) out.warnings.push_back("token " + std::to_string(j) + ": " + r.warning);
    }
    StepOutput sp = lm.step(last, cache_p, &delta);
    mask_logits(sp.logits, j, req.gen.min_length);
    mask_logits(su.logits, j, req.gen.min_length);
    const std::vector<double> fused = fuse_distributions(softmax(sp.logits.vec(), req.gen.temperature),
                                                         softmax(su.logits.vec(), req.gen.temperature),
                                                         cfg.gm_scale);
    const int tok = sample_topk_probs(fused, req.gen.top_k, rng);
    cache_p = std::move(sp.cache);
    cache_u = std::move(su.cache);
    if (j > 0 || cfg.pool_context) {
      add_row(pool.sum, su.hidden, 0);
      ++pool.count;
    }
    out.timings.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    if (is_stop(tok)) {
      out.timings.pop_back();
      break;
    }
    out.response.push_back(tok);
    last = tok;
  }
  return out;
}

void check_models(const SteeringModels& m, const GenerationRequest& req) {
  if (!m.lm || !m.vocab) throw std::invalid_argument("generation: language model and vocab are required");
  if (m.vocab->size() != m.lm->config().vocab) {
    throw std::invalid_argument("generation: vocab size " + std::to_string(m.vocab->size()) +
                                " does not match the model's " + std::to_string(m.lm->config().vocab));
  }
  switch (req.method) {
    case Method::kHM:
      throw std::invalid_argument("generation: HM marks human references and cannot be generated");
    case Method::kWD:
      if (!m.token_scores) throw std::invalid_argument("generation: WD needs a token score table");
      if (m.token_scores->vocab_size() != m.vocab->size()) {
        throw std::invalid_argument("generation: token score table does not cover the vocab");
      }
      req.wd.validate();
      m.token_scores->class_index(req.attribute);
      break;
    case Method::kPP:
      if (!m.discriminator) throw std::invalid_argument("generation: PP needs a discriminator");
      req.pplm.validate();
      m.discriminator->attribute(req.attribute);
      break;
    case Method::kAD:
      if (!m.adapters) {
        throw std::invalid_argument("generation: no adapter stack loaded for attribute '" + req.attribute + "'");
      }
      break;
    case Method::kDG:
      break;
  }
  if (req.gen.candidates > 1 && !m.discriminator) {
    throw std::invalid_argument("generation: reranking needs a discriminator");
  }
}

}  // namespace

Decoded decode_response(const SteeringModels& models, const GenerationRequest& req, std::span<const int> context,
                        std::mt19937_64& rng) {
  if (context.empty() || context.back() != Vocab::kSep) {
    throw std::invalid_argument("generation: context must end with SEP");
  }
  // p = 0 leaves nothing to perturb: take the plain path so the token stream is
  // exactly the unsteered one.
  if (req.method == Method::kPP && req.pplm.iterations > 0) return decode_pplm(models, req, context, rng);
  return decode_plain(models, req, context, rng);
}

GenerationRecord generate(const SteeringModels& models, const GenerationRequest& req) {
  check_models(models, req);
  req.gen.validate(models.vocab->size());
  const EncodedHistory enc = prepare_context(*models.lm, *models.vocab, req.history, req.gen.max_length);

  GenerationRecord rec;
  rec.method = req.method;
  rec.prefix = req.history;
  rec.context = enc.tokens;
  rec.truncated = enc.truncated;
  rec.seed = req.gen.seed;
  rec.config = {{"gen", req.gen.to_json()}};
  if (req.method == Method::kPP) rec.config["pplm"] = req.pplm.to_json();
  if (req.method == Method::kWD) rec.config["wd"] = {{"weight", req.wd.weight}};
  if (req.method == Method::kAD) rec.config["adapters"] = models.adapters->attribute;

  std::optional<AttributeId> attr;
  if (models.discriminator && !req.attribute.empty()) attr = models.discriminator->attribute(req.attribute);
  rec.attribute = attr ? attr->str() : req.attribute;

  std::mt19937_64 rng(req.gen.seed);
  std::vector<Decoded> cands;
  for (int c = 0; c < req.gen.candidates; ++c) {
    cands.push_back(decode_response(models, req, enc.tokens, rng));
    if (cands.back().response.empty()) throw std::logic_error("generation: produced an empty response");
  }
  for (const Decoded& d : cands) {
    rec.candidate_losses.push_back(
        attr ? score_response(*models.lm, *models.discriminator, enc.tokens, d.response, *attr) : 0.0);
    rec.candidate_texts.push_back(models.vocab->decode(d.response));
  }
  rec.selected = rerank(rec.candidate_losses);
  rec.candidates_considered = req.gen.candidates;
  Decoded& best = cands[rec.selected];
  rec.response = best.response;
  rec.response_text = rec.candidate_texts[rec.selected];
  rec.attribute_loss = rec.candidate_losses[rec.selected];
  rec.timings = best.timings;
  for (const Decoded& d : cands) rec.warnings.insert(rec.warnings.end(), d.warnings.begin(), d.warnings.end());
  if (enc.truncated) rec.warnings.push_back("history truncated: dropped " + std::to_string(enc.dropped_turns) + " turn(s)");
  return rec;
}

int rerank(const std::vector<double>& losses) {
  if (losses.empty()) throw std::invalid_argument("rerank: no candidates");
  int best = 0;
  for (int i = 1; i < static_cast<int>(losses.size()); ++i) {
    if (losses[i] < losses[best]) best = i;
  }
  return best;
}

int rerank(const std::vector<GenerationRecord>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("rerank: no candidates");
  std::vector<double> losses;
  for (const auto& c : candidates) {
    if (c.prefix != candidates.front().prefix || c.attribute != candidates.front().attribute) {
      throw std::invalid_argument("rerank: candidates differ in prefix or attribute");
    }
    losses.push_back(c.attribute_loss);
  }
  return rerank(losses);
}

}  // namespace steerlm
