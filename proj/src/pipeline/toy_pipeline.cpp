#include "steerlm/pipeline/toy_pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "steerlm/model/checkpoint.hpp"
#include "steerlm/model/train.hpp"
#include "steerlm/text/jsonl.hpp"

namespace steerlm {

namespace fs = std::filesystem;

Vocab build_corpus_vocab(const SyntheticCorpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& d : corpus.dialogues) texts.insert(texts.end(), d.turns.begin(), d.turns.end());
  for (const auto& ds : corpus.labeled) {
    for (const auto& e : ds.examples) texts.push_back(e.text);
  }
  return Vocab::build(texts);
}

CorpusSplits split_corpus(const SyntheticCorpus& corpus, int generator_dialogues, int scorer_dialogues,
                          std::uint64_t seed) {
  const auto& dlg = corpus.dialogues;
  if (generator_dialogues < 1 || scorer_dialogues < 0 ||
      generator_dialogues + scorer_dialogues >= static_cast<int>(dlg.size())) {
    throw std::invalid_argument("split_corpus: " + std::to_string(dlg.size()) + " dialogues cannot hold " +
                                std::to_string(generator_dialogues) + " generator + " +
                                std::to_string(scorer_dialogues) + " scorer dialogues and leave prefixes");
  }
  if (corpus.labeled.empty()) throw std::invalid_argument("split_corpus: corpus has no labeled data");
  CorpusSplits s;
  const auto gen_end = dlg.begin() + generator_dialogues;
  const auto scorer_end = gen_end + scorer_dialogues;
  s.generator.assign(dlg.begin(), gen_end);
  s.scorer.assign(gen_end, scorer_end);
  s.prefix_source.assign(scorer_end, dlg.end());

  const auto [internal, external] = split_labeled(corpus.labeled[0], 0.7, seed + 1);
  const auto [dtrain, dtest] = split_labeled(internal, 5.0 / 7.0, seed + 2);
  s.disc_train = dtrain;
  s.disc_test = dtest;
  s.external = external;

  // Duplicates are dropped first so the two prefix sets cannot share an entry.
  std::vector<std::vector<std::string>> prefixes;
  std::set<std::vector<std::string>> seen;
  for (auto& pr : moving_window_prefixes(s.prefix_source, 2)) {
    if (seen.insert(pr).second) prefixes.push_back(std::move(pr));
  }
  const IndexSplit split = split_indices(static_cast<int>(prefixes.size()), 0.8, seed + 3);
  for (int i : split.train) s.train_prefixes.push_back(prefixes[i]);
  for (int i : split.held_out) s.heldout_prefixes.push_back(prefixes[i]);
  return s;
}

namespace {

std::vector<Dialogue> as_dialogues(const std::vector<std::vector<std::string>>& prefixes) {
  std::vector<Dialogue> out;
  for (std::size_t i = 0; i < prefixes.size(); ++i) out.push_back({static_cast<std::int64_t>(i), prefixes[i]});
  return out;
}

std::vector<std::vector<std::string>> as_prefixes(const std::vector<Dialogue>& dialogues) {
  std::vector<std::vector<std::string>> out;
  for (const auto& d : dialogues) out.push_back(d.turns);
  return out;
}

}  // namespace

void save_corpus_splits(const std::string& dir, const CorpusSplits& s) {
  fs::create_directories(dir);
  save_dialogues(dir + "/dialogues_generator.jsonl", s.generator);
  save_dialogues(dir + "/dialogues_scorer.jsonl", s.scorer);
  save_dialogues(dir + "/dialogues_prefix.jsonl", s.prefix_source);
  save_dialogues(dir + "/prefixes_train.jsonl", as_dialogues(s.train_prefixes));
  save_dialogues(dir + "/prefixes_heldout.jsonl", as_dialogues(s.heldout_prefixes));
  save_labeled(dir + "/labeled_disc_train.jsonl", s.disc_train.examples);
  save_labeled(dir + "/labeled_disc_test.jsonl", s.disc_test.examples);
  save_labeled(dir + "/labeled_external.jsonl", s.external.examples);
  std::ofstream(dir + "/splits.json") << nlohmann::json{{"dataset", s.disc_train.name},
                                                        {"class_names", s.disc_train.class_names}}
                                             .dump(2);
}

CorpusSplits load_corpus_splits(const std::string& dir) {
  std::ifstream meta_in(dir + "/splits.json");
  if (!meta_in) throw std::runtime_error(dir + "/splits.json not found (run make-corpus first)");
  const auto meta = nlohmann::json::parse(meta_in);
  CorpusSplits s;
  auto dialogues = [&](const std::string& name) { return load_dialogues(dir + "/" + name).records; };
  s.generator = dialogues("dialogues_generator.jsonl");
  s.scorer = dialogues("dialogues_scorer.jsonl");
  s.prefix_source = dialogues("dialogues_prefix.jsonl");
  s.train_prefixes = as_prefixes(dialogues("prefixes_train.jsonl"));
  s.heldout_prefixes = as_prefixes(dialogues("prefixes_heldout.jsonl"));
  const auto classes = meta.at("class_names").get<std::vector<std::string>>();
  auto labeled = [&](const std::string& name) {
    LabeledDataset d;
    d.name = meta.at("dataset");
    d.class_names = classes;
    d.examples = load_labeled(dir + "/" + name, static_cast<int>(classes.size())).records;
    return d;
  };
  s.disc_train = labeled("labeled_disc_train.jsonl");
  s.disc_test = labeled("labeled_disc_test.jsonl");
  s.external = labeled("labeled_external.jsonl");
  return s;
}

ToyPipelineConfig::ToyPipelineConfig() {
  pplm.alpha = 0.1;
  distill_gen.candidates = 10;
  distill_gen.seed = 100;
}

nlohmann::json ToyPipelineConfig::to_json() const {
  return {{"preset", preset},
          {"seed", seed},
          {"generator_dialogues", generator_dialogues},
          {"scorer_dialogues", scorer_dialogues},
          {"prefix_dialogues", prefix_dialogues},
          {"labeled_per_class", labeled_per_class},
          {"model", model.to_json()},
          {"lm_train", lm_train.to_json()},
          {"scorer_train", scorer_train.to_json()},
          {"discriminator", discriminator.to_json()},
          {"external", {{"epochs", external.epochs}, {"batch_size", external.batch_size},
                        {"adam", external.adam.to_json()}, {"seed", external.seed}}},
          {"pplm", pplm.to_json()},
          {"distill_gen", distill_gen.to_json()},
          {"distill_count", distill_count},
          {"adapters", adapters.to_json()}};
}

std::string ToyPipelineConfig::fingerprint() const {
  Fnv1a h;
  h.update(to_json().dump());
  return checksum_hex(h.digest());
}

SteeringModels ToyPipeline::models(const std::string& attribute) const {
  SteeringModels m{lm.get(), &vocab, &discriminator, &token_scores, nullptr};
  if (!attribute.empty()) {
    const std::string key = discriminator.attribute(attribute).str();
    auto it = adapters.find(key);
    if (it != adapters.end()) m.adapters = &it->second;
  }
  return m;
}

namespace {

std::unique_ptr<TransformerLM> frozen_lm(const ModelConfig& cfg, ModelParams params) {
  params.frozen = true;
  return std::make_unique<TransformerLM>(cfg, std::make_shared<const ModelParams>(std::move(params)));
}

// Trains (or loads) one LM. Returns the frozen model.
std::unique_ptr<TransformerLM> lm_stage(const std::string& name, const ModelConfig& mc, const TrainConfig& tc,
                                        std::uint64_t init_seed, const std::vector<std::vector<int>>& sequences,
                                        const std::string& dir, const PipelineLog& log) {
  const std::string path = dir.empty() ? "" : dir + "/" + name + ".bin";
  if (!path.empty() && fs::exists(path)) {
    LoadedModel m = load_model(path);
    if (log) log(name + ": loaded " + path);
    return frozen_lm(m.config, std::move(m.params));
  }
  ModelParams params = ModelParams::init(mc, init_seed);
  const TrainResult r = train_lm(mc, params, sequences, tc, [&](int epoch, int step, double loss) {
    if (log && step % 100 == 0) log(name + ": epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                    " loss " + std::to_string(loss));
  });
  if (log) log(name + ": nll " + std::to_string(r.initial_nll) + " -> " + std::to_string(r.final_nll));
  if (!path.empty()) save_model(path + ".tmp", mc, params, {{"train", r.to_json()}}), fs::rename(path + ".tmp", path);
  return frozen_lm(mc, std::move(params));
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream(path + ".tmp") << j.dump(2);
  fs::rename(path + ".tmp", path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

std::string attribute_file(const std::string& attribute) {
  std::string s = attribute;
  for (char& c : s) {
    if (c == ':') c = '_';
  }
  return s;
}

}  // namespace

ToyPipeline build_toy_pipeline(const ToyPipelineConfig& cfg, const std::string& cache_dir, const PipelineLog& log) {
  ToyPipeline p;
  p.cfg = cfg;
  std::string dir;
  if (!cache_dir.empty()) {
    dir = cache_dir + "/" + cfg.fingerprint();
    fs::create_directories(dir);
    write_json(dir + "/config.json", cfg.to_json());
  }

  SyntheticSpec spec = preset_spec(cfg.preset);
  spec.seed = cfg.seed;
  spec.labeled_per_class = cfg.labeled_per_class;
  spec.dialogues = cfg.generator_dialogues + cfg.scorer_dialogues + cfg.prefix_dialogues;
  p.corpus = make_synthetic_attribute_corpus(spec);
  p.vocab = build_corpus_vocab(p.corpus);
  const CorpusSplits splits = split_corpus(p.corpus, cfg.generator_dialogues, cfg.scorer_dialogues, cfg.seed);
  const auto& gen_dialogues = splits.generator;
  const auto& scorer_dialogues = splits.scorer;

  ModelConfig mc = cfg.model;
  mc.vocab = p.vocab.size();
  p.lm = lm_stage("lm", mc, cfg.lm_train, cfg.seed, dialogue_sequences(gen_dialogues, p.vocab, mc.window), dir, log);
  p.scorer = lm_stage("scorer", mc, cfg.scorer_train, cfg.seed + 1000,
                      dialogue_sequences(scorer_dialogues, p.vocab, mc.window), dir, log);
  const std::string lm_sum = checksum_hex(p.lm->params().checksum());

  p.disc_train = splits.disc_train;
  p.disc_test = splits.disc_test;
  p.external_data = splits.external;

  const std::string disc_path = dir.empty() ? "" : dir + "/discriminator.bin";
  if (!disc_path.empty() && fs::exists(disc_path)) {
    p.discriminator = load_discriminator(disc_path);
    const auto meta = read_json(dir + "/discriminator_report.json");
    p.discriminator_report.train_f1 = meta.at("train_f1");
    p.discriminator_report.test_f1 = meta.at("test_f1");
    p.discriminator_report.train_accuracy = meta.at("train_accuracy");
    p.discriminator_report.test_accuracy = meta.at("test_accuracy");
    p.discriminator_report.lm_checksum = meta.at("lm_checksum");
    p.from_cache = true;
  } else {
    p.discriminator = train_discriminator(*p.lm, p.vocab, p.disc_train, p.disc_test, cfg.discriminator,
                                          &p.discriminator_report);
    p.checksums.push_back({"train-discriminator", lm_sum, checksum_hex(p.lm->params().checksum())});
    if (!dir.empty()) {
      save_discriminator(disc_path + ".tmp", p.discriminator);
      fs::rename(disc_path + ".tmp", disc_path);
      write_json(dir + "/discriminator_report.json", p.discriminator_report.to_json());
    }
  }
  if (log) log("discriminator: test F1 " + std::to_string(p.discriminator_report.test_f1));

  p.external = train_bow_classifier(p.vocab, p.external_data, cfg.external);
  require_disjoint(p.discriminator.train_ids, p.external.train_ids, "discriminator and external classifier data");
  p.token_scores = build_token_scores(p.vocab, p.disc_train);

  p.train_prefixes = splits.train_prefixes;
  p.heldout_prefixes = splits.heldout_prefixes;

  for (const auto& cls : p.discriminator.class_names) p.attributes.push_back(p.discriminator.dataset + ":" + cls);
  for (const auto& attr : p.attributes) {
    const std::string stem = dir.empty() ? "" : dir + "/" + attribute_file(attr);
    SteeringModels m = p.models();
    if (!stem.empty() && fs::exists(stem + ".distill.jsonl")) {
      p.distilled[attr] = DistillDataset::load(stem + ".distill.jsonl");
    } else {
      const std::string before = checksum_hex(p.lm->params().checksum());
      p.distilled[attr] = distill(m, p.train_prefixes, attr, cfg.pplm, cfg.distill_gen, cfg.distill_count,
                                  [&](int done, int total) {
                                    if (log && done % 50 == 0) {
                                      log("distill " + attr + ": " + std::to_string(done) + "/" + std::to_string(total));
                                    }
                                  });
      p.checksums.push_back({"distill " + attr, before, checksum_hex(p.lm->params().checksum())});
      if (!stem.empty()) {
        p.distilled[attr].save(stem + ".distill.jsonl.tmp");
        fs::rename(stem + ".distill.jsonl.tmp", stem + ".distill.jsonl");
      }
    }
    if (!stem.empty() && fs::exists(stem + ".adapters.bin")) {
      p.adapters[attr] = load_adapters(stem + ".adapters.bin", p.lm->config());
      const auto meta = read_json(stem + ".adapters.json");
      AdapterTrainReport r;
      r.adapter_params = meta.at("adapter_params");
      r.base_params = meta.at("base_params");
      r.adapter_fraction = meta.at("adapter_fraction");
      r.records_used = meta.at("records_used");
      r.lm_checksum = meta.at("lm_checksum");
      p.adapter_reports[attr] = r;
    } else {
      const std::string before = checksum_hex(p.lm->params().checksum());
      AdapterTrainReport report;
      p.adapters[attr] = train_adapters(*p.lm, p.distilled[attr], cfg.adapters, &report);
      p.adapter_reports[attr] = report;
      p.checksums.push_back({"train-adapters " + attr, before, checksum_hex(p.lm->params().checksum())});
      if (!stem.empty()) {
        save_adapters(stem + ".adapters.bin.tmp", p.lm->config(), p.adapters[attr]);
        fs::rename(stem + ".adapters.bin.tmp", stem + ".adapters.bin");
        write_json(stem + ".adapters.json", report.to_json());
      }
    }
    if (log) {
      log("adapters " + attr + ": " + std::to_string(p.distilled[attr].records.size()) + " records, fraction " +
          std::to_string(p.adapter_reports[attr].adapter_fraction));
    }
  }
  return p;
}

}  // namespace steerlm
