#include "steerlm/serve/service.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "steerlm/model/checkpoint.hpp"

namespace steerlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr std::size_t kCandidateTextLimit = 160;

std::string hex(std::uint64_t v) { return checksum_hex(v); }

std::uint64_t scores_checksum(const TokenScores& s) {
  Fnv1a h;
  h.update(s.dataset);
  h.update(s.scores);
  return h.digest();
}

// "field: reason" -> (field, reason); anything else is filed under `fallback`.
std::pair<std::string, std::string> split_reason(const std::string& msg, const std::string& fallback) {
  const auto colon = msg.find(": ");
  if (colon != std::string::npos && colon > 0 && msg.find(' ') > colon) {
    return {msg.substr(0, colon), msg.substr(colon + 2)};
  }
  return {fallback, msg};
}

template <typename T>
T get_as(const json& v, const char* expected) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("expected ") + expected);
  }
}

int get_int(const json& v) {
  if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
  return v.get<int>();
}

double get_number(const json& v) {
  if (!v.is_number()) throw std::invalid_argument("expected a number");
  return v.get<double>();
}

// Sets one field. Throws std::invalid_argument with the reason only.
void set_field(SessionConfig& c, const std::string& key, const json& v) {
  if (key == "method") {
    const std::string m = get_as<std::string>(v, "a string");
    try {
      c.method = parse_method(m);
    } catch (const std::exception&) {
      throw std::invalid_argument("unknown method '" + m + "' (expected DG, WD, PP or AD)");
    }
    if (c.method == Method::kHM) throw std::invalid_argument("HM cannot be generated");
  } else if (key == "attribute") {
    c.attribute = get_as<std::string>(v, "a string");
  } else if (key == "alpha") {
    c.pplm.alpha = get_number(v);
  } else if (key == "p") {
    c.pplm.iterations = get_int(v);
  } else if (key == "gamma") {
    c.pplm.gamma = get_number(v);
  } else if (key == "kl_scale") {
    c.pplm.kl_scale = get_number(v);
  } else if (key == "gm_scale") {
    c.pplm.gm_scale = get_number(v);
  } else if (key == "window") {
    c.pplm.window = get_int(v);
  } else if (key == "layers") {
    c.pplm.layers = get_as<std::vector<int>>(v, "a list of layer indices");
  } else if (key == "kl_schedule") {
    c.pplm.kl_schedule = parse_kl_schedule(get_as<std::string>(v, "a string"));
  } else if (key == "pool_context") {
    c.pplm.pool_context = get_as<bool>(v, "a boolean");
  } else if (key == "max_length") {
    c.gen.max_length = get_int(v);
  } else if (key == "min_length") {
    c.gen.min_length = get_int(v);
  } else if (key == "top_k") {
    c.gen.top_k = get_int(v);
  } else if (key == "temperature") {
    c.gen.temperature = get_number(v);
  } else if (key == "candidates") {
    c.gen.candidates = get_int(v);
  } else if (key == "w") {
    c.wd.weight = get_number(v);
  } else {
    throw std::invalid_argument("unknown field");
  }
}

}  // namespace

const std::vector<std::string>& session_config_fields() {
  static const std::vector<std::string> fields{
      "method", "attribute", "alpha",      "p",           "gamma",       "kl_scale",   "gm_scale", "window",
      "layers", "kl_schedule", "pool_context", "max_length", "min_length", "top_k", "temperature", "candidates", "w"};
  return fields;
}

json SessionConfig::to_json() const {
  return {{"method", method_name(method)}, {"attribute", attribute},   {"alpha", pplm.alpha},
          {"p", pplm.iterations},          {"gamma", pplm.gamma},       {"kl_scale", pplm.kl_scale},
          {"gm_scale", pplm.gm_scale},     {"window", pplm.window},     {"layers", pplm.layers},
          {"kl_schedule", kl_schedule_name(pplm.kl_schedule)},          {"pool_context", pplm.pool_context},
          {"max_length", gen.max_length},  {"min_length", gen.min_length}, {"top_k", gen.top_k},
          {"temperature", gen.temperature}, {"candidates", gen.candidates}, {"w", wd.weight}};
}

ServiceArtifacts load_service_artifacts(const std::string& data_dir) {
  const fs::path dir(data_dir);
  const fs::path vocab = dir / "vocab.txt", lm = dir / "lm.bin";
  if (!fs::exists(vocab) || !fs::exists(lm)) {
    throw std::runtime_error("data dir '" + data_dir +
                             "' must contain vocab.txt and lm.bin (optional: discriminator.bin, wd_scores.bin, "
                             "adapters/*.bin)");
  }
  ServiceArtifacts a;
  a.vocab = std::make_shared<const Vocab>(Vocab::load(vocab.string()));
  LoadedModel m = load_model(lm.string());
  m.params.frozen = true;
  a.lm = std::make_shared<const TransformerLM>(m.config, std::make_shared<const ModelParams>(std::move(m.params)));
  a.sources["lm"] = lm.string();
  if (fs::exists(dir / "discriminator.bin")) {
    a.discriminator = std::make_shared<const Discriminator>(load_discriminator((dir / "discriminator.bin").string()));
    a.sources["discriminator"] = (dir / "discriminator.bin").string();
  }
  if (fs::exists(dir / "wd_scores.bin")) {
    a.token_scores = std::make_shared<const TokenScores>(load_token_scores((dir / "wd_scores.bin").string()));
    a.sources["wd_scores"] = (dir / "wd_scores.bin").string();
  }
  if (fs::is_directory(dir / "adapters")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / "adapters")) {
      if (e.path().extension() == ".bin") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const Container c = read_container(f.string());
      if (c.meta.value("kind", "") != "adapters") continue;
      a.adapter_paths[c.meta.at("attribute").get<std::string>()] = f.string();
    }
  }
  return a;
}

Service::Service(ServiceArtifacts artifacts, std::uint64_t seed) : art_(std::move(artifacts)), seeds_(seed) {
  if (!art_.lm || !art_.vocab) throw std::invalid_argument("service: a language model and vocab are required");
  if (art_.vocab->size() != art_.lm->config().vocab) {
    throw std::invalid_argument("service: vocab does not match the language model");
  }
}

std::shared_ptr<Session> Service::find(const std::string& id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, {{"error", "unknown session '" + id + "'"}});
  return it->second;
}

std::shared_ptr<const AdapterStack> Service::adapter_for(const std::string& attribute) {
  std::lock_guard<std::mutex> lock(mu_);
  if (auto it = art_.adapters.find(attribute); it != art_.adapters.end()) return it->second;
  auto path = art_.adapter_paths.find(attribute);
  if (path == art_.adapter_paths.end()) return nullptr;
  auto stack = std::make_shared<const AdapterStack>(load_adapters(path->second, art_.lm->config()));
  art_.adapters[attribute] = stack;
  return stack;
}

void Service::apply(SessionConfig& cfg, const json& patch, bool creating) {
  if (!patch.is_object()) throw ApiError(422, {{"errors", {{"body", "expected a JSON object"}}}});

  // Attribute names are normalised to "dataset:class" where possible.
  auto canonical = [&](SessionConfig& c) {
    if (c.attribute.empty()) return;
    if (art_.discriminator) {
      c.attribute = art_.discriminator->attribute(c.attribute).str();
    } else if (art_.token_scores) {
      c.attribute = art_.token_scores->dataset + ":" +
                    art_.token_scores->class_names[art_.token_scores->class_index(c.attribute)];
    }
  };
  auto check = [&](SessionConfig& c) {
    c.gen.validate(art_.vocab->size());
    c.pplm.validate();
    c.wd.validate();
    for (int l : c.pplm.layers) {
      if (l >= art_.lm->config().layers) throw std::invalid_argument("layers: index out of range");
    }
    try {
      canonical(c);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("attribute: ") + e.what());
    }
    const bool needs_attribute = c.method != Method::kDG;
    if (needs_attribute && c.attribute.empty()) {
      throw std::invalid_argument("attribute: required for " + method_name(c.method));
    }
    if (c.method == Method::kPP && !art_.discriminator) {
      throw std::invalid_argument("method: PP needs a discriminator, none is loaded");
    }
    if (c.method == Method::kWD && !art_.token_scores) {
      throw std::invalid_argument("method: WD needs a token score table, none is loaded");
    }
    if (c.gen.candidates > 1 && !art_.discriminator) {
      throw std::invalid_argument("candidates: reranking needs a discriminator, none is loaded");
    }
    if (c.method == Method::kAD && !art_.adapters.count(c.attribute) && !art_.adapter_paths.count(c.attribute)) {
      std::string avail;
      for (const auto& [k, v] : art_.adapter_paths) avail += (avail.empty() ? "" : ", ") + k;
      for (const auto& [k, v] : art_.adapters) {
        if (!art_.adapter_paths.count(k)) avail += (avail.empty() ? "" : ", ") + k;
      }
      throw std::invalid_argument("attribute: no adapter stack for '" + c.attribute +
                                  "'; available: " + (avail.empty() ? "none" : avail));
    }
  };

  json errors = json::object();
  for (const auto& [key, value] : patch.items()) {
    if (key == "seed") {
      if (!creating) errors[key] = "can only be set when the session is created";
      continue;
    }
    SessionConfig single = cfg;
    try {
      set_field(single, key, value);
    } catch (const std::exception& e) {
      errors[key] = e.what();
      continue;
    }
    // Method and attribute depend on each other; judge them together below.
    if (key == "method" || key == "attribute") continue;
    try {
      check(single);
    } catch (const std::exception& e) {
      const auto [field, reason] = split_reason(e.what(), key);
      if (field == key) errors[key] = reason;
    }
  }
  if (errors.empty()) {
    SessionConfig all = cfg;
    for (const auto& [key, value] : patch.items()) {
      if (key != "seed") set_field(all, key, value);
    }
    try {
      check(all);
      cfg = all;
    } catch (const std::exception& e) {
      const auto [field, reason] = split_reason(e.what(), "config");
      errors[field] = reason;
    }
  }
  if (!errors.empty()) throw ApiError(422, {{"error", "invalid config"}, {"errors", errors}});
}

std::shared_ptr<const AdapterStack> Service::bind(const SessionConfig& cfg) {
  if (cfg.method != Method::kAD) return nullptr;
  auto stack = adapter_for(cfg.attribute);
  if (!stack) throw ApiError(422, {{"errors", {{"attribute", "no adapter stack for '" + cfg.attribute + "'"}}}});
  return stack;
}

json Service::create_session(const json& body) {
  auto s = std::make_shared<Session>();
  apply(s->config, body.is_null() ? json::object() : body, true);
  s->adapters = bind(s->config);
  std::uint64_t seed = 0;
  if (body.is_object() && body.contains("seed")) {
    if (!body["seed"].is_number_unsigned() && !body["seed"].is_number_integer()) {
      throw ApiError(422, {{"error", "invalid config"}, {"errors", {{"seed", "expected a non-negative integer"}}}});
    }
    seed = body["seed"].get<std::uint64_t>();
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!body.is_object() || !body.contains("seed")) seed = seeds_();
    s->id = "s" + std::to_string(next_id_++);
    if (s->adapters) s->adapter_checksum = hex(s->adapters->checksum());
    sessions_[s->id] = s;
  }
  s->rng.seed(seed);
  return {{"session_id", s->id}, {"seed", seed}, {"effective_config", s->config.to_json()}};
}

json Service::turn(const std::string& id, const json& body) {
  auto s = find(id);
  std::unique_lock<std::mutex> lock(s->turn_mutex, std::try_to_lock);
  if (!lock.owns_lock()) throw ApiError(409, {{"error", "a turn is already running on session '" + id + "'"}});
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    throw ApiError(422, {{"error", "invalid turn"}, {"errors", {{"text", "expected a string"}}}});
  }
  const std::string text = body["text"].get<std::string>();
  if (Vocab::split(text).empty()) throw ApiError(422, {{"error", "invalid turn"}, {"errors", {{"text", "is empty"}}}});
  if (on_turn_locked) on_turn_locked(id);

  const std::uint64_t seed = s->rng();
  GenerationRequest req;
  req.method = s->config.method;
  req.attribute = s->config.attribute;
  req.gen = s->config.gen;
  req.gen.seed = seed;
  req.pplm = s->config.pplm;
  req.wd = s->config.wd;
  req.history = s->history;
  req.history.push_back(text);
  SteeringModels m{art_.lm.get(), art_.vocab.get(), art_.discriminator.get(), art_.token_scores.get(),
                   s->adapters.get()};
  GenerationRecord rec;
  try {
    rec = generate(m, req);
  } catch (const std::length_error& e) {
    throw ApiError(422, {{"error", "invalid turn"}, {"errors", {{"text", e.what()}}}});
  } catch (const std::invalid_argument& e) {
    throw ApiError(422, {{"error", e.what()}});
  }

  s->history.push_back(text);
  s->history.push_back(rec.response_text);
  json per_token = json::array();
  double total_ms = 0;
  for (double t : rec.timings) {
    per_token.push_back(1000.0 * t);
    total_ms += 1000.0 * t;
  }
  json losing = json::array();
  for (std::size_t i = 0; i < rec.candidate_texts.size(); ++i) {
    if (static_cast<int>(i) == rec.selected) continue;
    std::string t = rec.candidate_texts[i];
    if (t.size() > kCandidateTextLimit) t = t.substr(0, kCandidateTextLimit) + "...";
    losing.push_back({{"index", i}, {"text", t}, {"attribute_loss", rec.candidate_losses[i]}});
  }
  json out = {{"session_id", id},
              {"turn", s->transcript.size()},
              {"response_text", rec.response_text},
              {"per_token_ms", per_token},
              {"mean_ms_per_token", rec.timings.empty() ? 0.0 : total_ms / static_cast<double>(rec.timings.size())},
              {"attribute_loss", rec.attribute.empty() ? json(nullptr) : json(rec.attribute_loss)},
              {"candidates_considered", rec.candidates_considered},
              {"losing_candidates", losing},
              {"seed", seed},
              {"truncated", rec.truncated},
              {"warnings", rec.warnings},
              {"config", s->config.to_json()}};
  if (s->adapters) out["adapter_checksum"] = hex(s->adapters->checksum());
  s->transcript.push_back({{"user", text}, {"reply", out}});
  return out;
}

json Service::patch_config(const std::string& id, const json& body) {
  auto s = find(id);
  // Waits for a running turn: changes apply from the next turn on.
  std::lock_guard<std::mutex> lock(s->turn_mutex);
  SessionConfig cfg = s->config;
  apply(cfg, body, false);
  auto stack = bind(cfg);
  s->config = cfg;
  s->adapters = stack;
  {
    std::lock_guard<std::mutex> g(mu_);
    s->adapter_checksum = stack ? hex(stack->checksum()) : "";
  }
  return {{"session_id", id}, {"effective_config", s->config.to_json()}};
}

json Service::session(const std::string& id) {
  auto s = find(id);
  std::lock_guard<std::mutex> lock(s->turn_mutex);
  return {{"session_id", id}, {"config", s->config.to_json()}, {"history", s->history}, {"transcript", s->transcript}};
}

json Service::attributes() {
  std::set<std::string> names;
  if (art_.discriminator) {
    for (const auto& c : art_.discriminator->class_names) names.insert(art_.discriminator->dataset + ":" + c);
  }
  if (art_.token_scores) {
    for (const auto& c : art_.token_scores->class_names) names.insert(art_.token_scores->dataset + ":" + c);
  }
  std::lock_guard<std::mutex> lock(mu_);
  json stacks = json::array();
  std::set<std::string> with_stacks;
  for (const auto& [k, v] : art_.adapter_paths) with_stacks.insert(k);
  for (const auto& [k, v] : art_.adapters) with_stacks.insert(k);
  for (const auto& k : with_stacks) {
    names.insert(k);
    auto it = art_.adapters.find(k);
    json e = {{"attribute", k}, {"loaded", it != art_.adapters.end()}};
    if (it != art_.adapters.end()) e["checksum"] = hex(it->second->checksum());
    stacks.push_back(e);
  }
  json methods = json::array({"DG"});
  if (art_.token_scores) methods.push_back("WD");
  if (art_.discriminator) methods.push_back("PP");
  if (!with_stacks.empty()) methods.push_back("AD");
  return {{"attributes", std::vector<std::string>(names.begin(), names.end())},
          {"adapter_stacks", stacks},
          {"methods", methods}};
}

json Service::healthz() {
  json ck = {{"lm", hex(art_.lm->params().checksum())}};
  if (art_.discriminator) ck["discriminator"] = hex(art_.discriminator->checksum());
  if (art_.token_scores) ck["wd_scores"] = hex(scores_checksum(*art_.token_scores));
  json adapters = json::object();
  std::set<std::string> bound;
  std::size_t sessions = 0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [k, v] : art_.adapters) adapters[k] = hex(v->checksum());
    for (const auto& [k, v] : sessions_) {
      if (!v->adapter_checksum.empty()) bound.insert(v->adapter_checksum);
    }
    sessions = sessions_.size();
  }
  ck["adapters"] = adapters;
#ifdef STEERLM_FLOAT32
  const char* scalar = "float32";
#else
  const char* scalar = "float64";
#endif
  return {{"status", "ok"},
          {"build", {{"version", kVersion}, {"scalar", scalar}, {"compiler", __VERSION__}}},
          {"checkpoints", ck},
          {"sources", art_.sources},
          {"bound_adapters", std::vector<std::string>(bound.begin(), bound.end())},
          {"sessions", sessions}};
}

}  // namespace steerlm
