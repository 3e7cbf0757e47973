#include "steerlm/steering/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "steerlm/autodiff/ops.hpp"

namespace steerlm {

namespace {

nlohmann::json record_json(const DistillRecord& r) {
  return {{"prefix", r.prefix},
          {"context", r.context},
          {"response", r.response},
          {"attribute_loss", r.attribute_loss},
          {"seed", r.seed}};
}

}  // namespace

void DistillDataset::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json meta = {{"kind", "distill"},
                         {"attribute", attribute},
                         {"pplm", pplm.to_json()},
                         {"gen", gen.to_json()},
                         {"records", records.size()},
                         {"skipped", skipped}};
  out << meta.dump() << '\n';
  // Full precision so stored losses survive the round trip.
  for (const auto& r : records) out << record_json(r).dump() << '\n';
}

DistillDataset DistillDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty distillation file");
  const auto meta = nlohmann::json::parse(line);
  if (meta.value("kind", "") != "distill") throw std::runtime_error(path + ": not a distillation dataset");
  DistillDataset d;
  d.attribute = meta.at("attribute").get<std::string>();
  d.pplm = PPLMConfig::from_json(meta.at("pplm"));
  d.gen = GenConfig::from_json(meta.at("gen"));
  d.skipped = meta.value("skipped", d.skipped);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    DistillRecord r;
    r.prefix = j.at("prefix").get<std::vector<std::string>>();
    r.context = j.at("context").get<std::vector<int>>();
    r.response = j.at("response").get<std::vector<int>>();
    r.attribute_loss = j.at("attribute_loss").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    d.records.push_back(std::move(r));
  }
  return d;
}

DistillDataset distill(const SteeringModels& models, const std::vector<std::vector<std::string>>& prefixes,
                       const std::string& attribute, const PPLMConfig& pplm, const GenConfig& gen, int count,
                       const DistillProgress& progress) {
  if (count < 0) throw std::invalid_argument("distill: count must be >= 0");
  if (count > 0 && prefixes.empty()) throw std::invalid_argument("distill: no prefixes");
  pplm.validate();
  gen.validate();
  if (!models.discriminator) throw std::invalid_argument("distill: a discriminator is required");
  DistillDataset out;
  out.attribute = models.discriminator->attribute(attribute).str();
  out.pplm = pplm;
  out.gen = gen;
  for (int i = 0; i < count; ++i) {
    GenerationRequest req;
    req.method = Method::kPP;
    req.history = prefixes[i % prefixes.size()];
    req.attribute = attribute;
    req.gen = gen;
    req.gen.seed = gen.seed + static_cast<std::uint64_t>(i);
    req.pplm = pplm;
    try {
      GenerationRecord rec = generate(models, req);
      out.records.push_back({rec.prefix, rec.context, rec.response, rec.attribute_loss, rec.seed});
    } catch (const std::exception& e) {
      out.skipped.push_back("prefix " + std::to_string(i % prefixes.size()) + ": " + e.what());
    }
    if (progress) progress(i + 1, count);
  }
  return out;
}

nlohmann::json AdapterTrainConfig::to_json() const {
  return {{"adapter", adapter.to_json()}, {"train", train.to_json()}, {"keep_fraction", keep_fraction},
          {"init_seed", init_seed}};
}

nlohmann::json AdapterTrainReport::to_json() const {
  return {{"train", train.to_json()},           {"adapter_params", adapter_params},
          {"base_params", base_params},         {"adapter_fraction", adapter_fraction},
          {"records_used", records_used},       {"lm_checksum", lm_checksum}};
}

TrainExample response_example(std::span<const int> context, std::span<const int> response) {
  if (response.empty()) throw std::invalid_argument("response_example: empty response");
  std::vector<int> tokens{Vocab::kBos};
  tokens.insert(tokens.end(), context.begin(), context.end());
  tokens.insert(tokens.end(), response.begin(), response.end());
  tokens.push_back(Vocab::kSep);
  TrainExample ex = TrainExample::shifted(tokens);
  // targets[i] is tokens[i+1]; the response starts at tokens[1 + |context|].
  for (std::size_t i = 0; i < context.size(); ++i) ex.targets[i] = -1;
  return ex;
}

namespace {

LogitsBuilder adapter_builder(const TransformerLM& lm, const AdapterStack& stack, bool requires_grad) {
  return [&lm, &stack, requires_grad](ad::Graph& g, const TrainExample& ex) {
    BoundModel bm = bind_model(g, lm.params(), false);
    BoundAdapters ba = bind_adapters(g, stack, requires_grad);
    ForwardVars f = forward(g, lm.config(), bm, ex.inputs, {}, {}, &ba);
    return std::make_pair(f.logits, ba.leaves);
  };
}

LogitsBuilder base_builder(const TransformerLM& lm) {
  return [&lm](ad::Graph& g, const TrainExample& ex) {
    BoundModel bm = bind_model(g, lm.params(), false);
    ForwardVars f = forward(g, lm.config(), bm, ex.inputs, {}, {});
    return std::make_pair(f.logits, std::vector<ad::Var>{});
  };
}

std::vector<TrainExample> examples_of(const std::vector<DistillRecord>& records) {
  std::vector<TrainExample> out;
  for (const auto& r : records) out.push_back(response_example(r.context, r.response));
  return out;
}

}  // namespace

AdapterStack train_adapters(const TransformerLM& lm, const DistillDataset& data, const AdapterTrainConfig& cfg,
                            AdapterTrainReport* report, const ProgressFn& progress) {
  if (data.records.empty()) throw std::invalid_argument("train_adapters: distillation dataset is empty");
  if (!(cfg.keep_fraction > 0 && cfg.keep_fraction <= 1)) {
    throw std::invalid_argument("train_adapters: keep_fraction must lie in (0, 1]");
  }
  const std::uint64_t before = lm.params().checksum();

  std::vector<DistillRecord> kept = data.records;
  if (cfg.keep_fraction < 1) {
    std::stable_sort(kept.begin(), kept.end(),
                     [](const DistillRecord& a, const DistillRecord& b) { return a.attribute_loss < b.attribute_loss; });
    const auto n = static_cast<std::size_t>(std::ceil(cfg.keep_fraction * static_cast<double>(kept.size())));
    kept.resize(std::max<std::size_t>(1, n));
  }

  AdapterStack stack = AdapterStack::init(lm.config(), cfg.adapter, cfg.init_seed);
  stack.attribute = data.attribute;
  stack.source = {{"pplm", data.pplm.to_json()}, {"gen", data.gen.to_json()}, {"train", cfg.to_json()},
                  {"records", kept.size()}};
  std::vector<Tensor*> tensors;
  stack.visit([&](const std::string&, Tensor& t) { tensors.push_back(&t); });
  const TrainResult tr = run_training(tensors, examples_of(kept), cfg.train, adapter_builder(lm, stack, true), progress);

  if (lm.params().checksum() != before) throw std::logic_error("train_adapters: base LM parameters changed");
  if (report) {
    report->train = tr;
    report->adapter_params = stack.parameter_count();
    report->base_params = lm.params().parameter_count();
    report->adapter_fraction = static_cast<double>(report->adapter_params) / static_cast<double>(report->base_params);
    report->records_used = static_cast<int>(kept.size());
    report->lm_checksum = checksum_hex(before);
  }
  return stack;
}

double response_nll(const TransformerLM& lm, const AdapterStack* adapters, const std::vector<DistillRecord>& records) {
  if (records.empty()) throw std::invalid_argument("response_nll: no records");
  return adapters ? mean_nll(examples_of(records), adapter_builder(lm, *adapters, false))
                  : mean_nll(examples_of(records), base_builder(lm));
}

}  // namespace steerlm
