// Command-line front end: corpus, training, generation, evaluation and serving.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "steerlm/eval/experiments.hpp"
#include "steerlm/eval/metrics.hpp"
#include "steerlm/model/checkpoint.hpp"
#include "steerlm/model/train.hpp"
#include "steerlm/pipeline/toy_pipeline.hpp"
#include "steerlm/serve/service.hpp"
#include "steerlm/text/jsonl.hpp"

namespace fs = std::filesystem;
using namespace steerlm;

namespace {

struct Common {
  std::string data_dir;
  std::uint64_t seed = 1;

  std::string path(const std::string& name) const { return (fs::path(data_dir) / name).string(); }
  std::string corpus() const { return path("corpus"); }
};

std::string default_data_dir() {
  const char* env = std::getenv("STEERLM_DATA_DIR");
  return env && *env ? env : "steerlm-data";
}

std::string attribute_stem(const std::string& attribute) {
  std::string s = attribute;
  for (char& c : s) {
    if (c == ':') c = '_';
  }
  return s;
}

std::unique_ptr<TransformerLM> load_frozen(const std::string& path) {
  LoadedModel m = load_model(path);
  m.params.frozen = true;
  return std::make_unique<TransformerLM>(m.config, std::make_shared<const ModelParams>(std::move(m.params)));
}

void write_text(const std::string& path, const std::string& text) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');) out.push_back(std::stod(tok));
  return out;
}

template <typename T>
std::vector<T> parse_ints(const std::string& s) {
  std::vector<T> out;
  std::stringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');) out.push_back(static_cast<T>(std::stoll(tok)));
  return out;
}

struct ModelFlags {
  ModelConfig model;
  TrainConfig train;

  void add(CLI::App* app) {
    app->add_option("--layers", model.layers, "transformer layers")->capture_default_str();
    app->add_option("--width", model.width, "model width d")->capture_default_str();
    app->add_option("--heads", model.heads, "attention heads")->capture_default_str();
    app->add_option("--ffn", model.ffn, "feed-forward width")->capture_default_str();
    app->add_option("--window", model.window, "context window")->capture_default_str();
    app->add_option("--epochs", train.epochs)->capture_default_str();
    app->add_option("--batch", train.batch_size)->capture_default_str();
    app->add_option("--lr", train.adam.lr)->capture_default_str();
  }
};

struct GenFlags {
  GenConfig gen;
  PPLMConfig pplm;
  std::string kl_schedule = "combined";
  double w = 0.0;

  void add(CLI::App* app, bool with_wd) {
    app->add_option("--max-length", gen.max_length)->capture_default_str();
    app->add_option("--min-length", gen.min_length)->capture_default_str();
    app->add_option("--top-k", gen.top_k)->capture_default_str();
    app->add_option("--temperature", gen.temperature)->capture_default_str();
    app->add_option("--candidates", gen.candidates, "samples per prefix, reranked by attribute loss")
        ->capture_default_str();
    app->add_option("--alpha", pplm.alpha, "PPLM step size")->capture_default_str();
    app->add_option("--p", pplm.iterations, "PPLM iterations per token")->capture_default_str();
    app->add_option("--gamma", pplm.gamma, "gradient normalisation exponent")->capture_default_str();
    app->add_option("--kl-scale", pplm.kl_scale)->capture_default_str();
    app->add_option("--gm-scale", pplm.gm_scale)->capture_default_str();
    app->add_option("--perturb-window", pplm.window, "perturb only the most recent N positions (0 = all)")
        ->capture_default_str();
    app->add_option("--kl-schedule", kl_schedule)->check(CLI::IsMember({"combined", "alternating", "once"}))
        ->capture_default_str();
    if (with_wd) app->add_option("--w", w, "weighted decoding weight")->capture_default_str();
  }
  void finish() {
    pplm.kl_schedule = parse_kl_schedule(kl_schedule);
    pplm.validate();
  }
};

struct Artifacts {
  Vocab vocab;
  std::unique_ptr<TransformerLM> lm;
  std::optional<Discriminator> disc;
  std::optional<TokenScores> scores;
  std::optional<AdapterStack> adapters;

  SteeringModels models() const {
    return {lm.get(), &vocab, disc ? &*disc : nullptr, scores ? &*scores : nullptr, adapters ? &*adapters : nullptr};
  }
};

Artifacts load_artifacts(const Common& c, Method method, const std::string& attribute, bool need_disc) {
  Artifacts a;
  a.vocab = Vocab::load(c.path("vocab.txt"));
  a.lm = load_frozen(c.path("lm.bin"));
  if (need_disc || method == Method::kPP || fs::exists(c.path("discriminator.bin"))) {
    a.disc = load_discriminator(c.path("discriminator.bin"));
  }
  if (method == Method::kWD) a.scores = load_token_scores(c.path("wd_scores.bin"));
  if (method == Method::kAD) {
    const std::string canonical = a.disc ? a.disc->attribute(attribute).str() : attribute;
    const std::string p = c.path("adapters/" + attribute_stem(canonical) + ".bin");
    if (!fs::exists(p)) {
      std::string avail;
      if (fs::is_directory(c.path("adapters"))) {
        for (const auto& e : fs::directory_iterator(c.path("adapters"))) avail += " " + e.path().stem().string();
      }
      throw std::runtime_error("no adapter stack for '" + canonical + "' (" + p + "); available:" +
                               (avail.empty() ? " none" : avail));
    }
    a.adapters = load_adapters(p, a.lm->config());
  }
  return a;
}

std::vector<std::vector<std::string>> prefixes_for(const Common& c, const std::string& split) {
  const std::string file = c.corpus() + "/prefixes_" + split + ".jsonl";
  std::vector<std::vector<std::string>> out;
  for (const auto& d : load_dialogues(file).records) out.push_back(d.turns);
  return out;
}

void progress_line(const std::string& what, int done, int total) {
  if (done == total || done % 25 == 0) std::cerr << what << ": " << done << "/" << total << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steerlm: controllable dialogue generation with PPLM, weighted decoding and residual adapters"};
  app.require_subcommand(1);
  app.fallthrough();  // --seed and --data-dir may follow the subcommand
  Common c;
  c.data_dir = default_data_dir();
  app.add_option("--data-dir", c.data_dir, "artifact directory (default: $STEERLM_DATA_DIR or ./steerlm-data)");
  app.add_option("--seed", c.seed, "seed for every random choice")->capture_default_str();

  // make-corpus
  auto* mk = app.add_subcommand("make-corpus", "generate the synthetic attribute corpus and its splits");
  std::string preset = "sentiment";
  int gen_dialogues = 1000, scorer_dialogues = 500, prefix_dialogues = 500, labeled_per_class = 500;
  mk->add_option("--preset", preset)->check(CLI::IsMember({"sentiment", "act", "topic", "all"}))->capture_default_str();
  mk->add_option("--generator-dialogues", gen_dialogues)->capture_default_str();
  mk->add_option("--scorer-dialogues", scorer_dialogues)->capture_default_str();
  mk->add_option("--prefix-dialogues", prefix_dialogues)->capture_default_str();
  mk->add_option("--labeled-per-class", labeled_per_class)->capture_default_str();

  // train-lm / train-scorer-lm
  ModelFlags lm_flags, scorer_flags;
  auto* tlm = app.add_subcommand("train-lm", "train the generator LM on the generator dialogues");
  lm_flags.add(tlm);
  auto* tsc = app.add_subcommand("train-scorer-lm", "train the separate perplexity scorer on its own dialogues");
  scorer_flags.add(tsc);

  // train-discriminator
  auto* tdisc = app.add_subcommand("train-discriminator",
                                   "train the attribute head on the frozen LM, plus the external BoW classifier");
  DiscriminatorTrainConfig disc_cfg;
  tdisc->add_option("--epochs", disc_cfg.epochs)->capture_default_str();
  tdisc->add_option("--batch", disc_cfg.batch_size)->capture_default_str();
  tdisc->add_option("--lr", disc_cfg.adam.lr)->capture_default_str();

  auto* wds = app.add_subcommand("build-wd-scores", "build the weighted-decoding token score table");

  // pplm-generate
  auto* gen = app.add_subcommand("pplm-generate", "generate responses for conversation prefixes (any method)");
  GenFlags gen_flags;
  gen_flags.add(gen, true);
  std::string method = "PP", attribute, split = "heldout", records_out;
  int n = 200, offset = 0;
  bool append = false;
  gen->add_option("--method", method)->check(CLI::IsMember({"DG", "WD", "PP", "AD"}))->capture_default_str();
  gen->add_option("--attribute", attribute, "e.g. sentiment:positive");
  gen->add_option("--split", split)->check(CLI::IsMember({"heldout", "train"}))->capture_default_str();
  gen->add_option("-n,--count", n, "number of prefixes")->capture_default_str();
  gen->add_option("--offset", offset)->capture_default_str();
  gen->add_option("--out", records_out, "records file (default records/<method>_<attribute>.jsonl)");
  gen->add_flag("--append", append, "append to an existing records file");

  // distill
  auto* dist = app.add_subcommand("distill", "build an adapter training set from PPLM responses on train prefixes");
  GenFlags dist_flags;
  dist_flags.pplm.alpha = ToyPipelineConfig{}.pplm.alpha;
  dist_flags.gen.candidates = ToyPipelineConfig{}.distill_gen.candidates;
  dist_flags.add(dist, false);
  int distill_count = ToyPipelineConfig{}.distill_count;
  std::string distill_attr;
  dist->add_option("--attribute", distill_attr)->required();
  dist->add_option("--count", distill_count)->capture_default_str();

  // train-adapters
  auto* tad = app.add_subcommand("train-adapters", "train a residual adapter stack on a distilled set");
  AdapterTrainConfig ad_cfg;
  std::string ad_attr;
  tad->add_option("--attribute", ad_attr)->required();
  tad->add_option("--bottleneck", ad_cfg.adapter.bottleneck)->capture_default_str();
  tad->add_option("--attach", ad_cfg.adapter.layers, "layers that get an adapter (default: all)");
  tad->add_option("--epochs", ad_cfg.train.epochs)->capture_default_str();
  tad->add_option("--batch", ad_cfg.train.batch_size)->capture_default_str();
  tad->add_option("--lr", ad_cfg.train.adam.lr)->capture_default_str();
  tad->add_option("--keep", ad_cfg.keep_fraction, "keep the lowest-loss fraction of records")->capture_default_str();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score generation records (ppl, dist-n, discriminator, external)");
  std::vector<std::string> eval_records;
  std::string eval_out;
  ev->add_option("--records", eval_records, "records files written by pplm-generate");
  ev->add_option("--out", eval_out, "write the report as JSON");

  // sweep
  auto* sw = app.add_subcommand("sweep", "alpha x p grid with normalised perplexity and classifier loss");
  GenFlags sweep_flags;
  sweep_flags.gen.max_length = 12;
  sweep_flags.add(sw, false);
  std::string sweep_attr = "sentiment:positive", alphas = "0.005,0.01,0.02,0.04", ps = "0,1,3,5,10", seeds = "1,2",
              sweep_out;
  int sweep_n = 20;
  sw->add_option("--attribute", sweep_attr)->capture_default_str();
  sw->add_option("--alphas", alphas)->capture_default_str();
  sw->add_option("--ps", ps)->capture_default_str();
  sw->add_option("--seeds", seeds)->capture_default_str();
  sw->add_option("-n,--count", sweep_n)->capture_default_str();
  sw->add_option("--out", sweep_out, "CSV path (default sweep.csv in the data dir)");

  // bench
  auto* bn = app.add_subcommand("bench", "per-token latency of DG, WD, PP and AD on one CPU");
  BenchConfig bench_cfg;
  int bench_n = 20, bench_p = 10;
  double bench_alpha = ToyPipelineConfig{}.pplm.alpha;
  std::string bench_attr = "sentiment:positive";
  bn->add_option("--tokens", bench_cfg.tokens)->capture_default_str();
  bn->add_option("--reps", bench_cfg.reps)->capture_default_str();
  bn->add_option("-n,--count", bench_n)->capture_default_str();
  bn->add_option("--p", bench_p)->capture_default_str();
  bn->add_option("--alpha", bench_alpha)->capture_default_str();
  bn->add_option("--attribute", bench_attr)->capture_default_str();

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP/JSON session API");
  std::string host = "127.0.0.1";
  int port = 8080;
  sv->add_option("--host", host)->capture_default_str();
  sv->add_option("--port", port, "0 picks a free port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mk) {
      SyntheticSpec spec = preset_spec(preset);
      spec.seed = c.seed;
      spec.labeled_per_class = labeled_per_class;
      spec.dialogues = gen_dialogues + scorer_dialogues + prefix_dialogues;
      const SyntheticCorpus corpus = make_synthetic_attribute_corpus(spec);
      const CorpusSplits s = split_corpus(corpus, gen_dialogues, scorer_dialogues, c.seed);
      save_corpus_splits(c.corpus(), s);
      const Vocab vocab = build_corpus_vocab(corpus);
      vocab.save(c.path("vocab.txt"));
      std::cout << "corpus: " << corpus.dialogues.size() << " dialogues, vocab " << vocab.size() << ", prefixes "
                << s.train_prefixes.size() << " train / " << s.heldout_prefixes.size() << " held-out, labeled "
                << s.disc_train.examples.size() << "/" << s.disc_test.examples.size() << "/"
                << s.external.examples.size() << " (disc train/test/external) -> " << c.corpus() << "\n";
    } else if (*tlm || *tsc) {
      const bool scorer = tsc->parsed();
      ModelFlags& f = scorer ? scorer_flags : lm_flags;
      const Vocab vocab = Vocab::load(c.path("vocab.txt"));
      const CorpusSplits s = load_corpus_splits(c.corpus());
      ModelConfig mc = f.model;
      mc.vocab = vocab.size();
      mc.validate();
      f.train.seed = c.seed;
      ModelParams params = ModelParams::init(mc, c.seed);
      const auto seqs = dialogue_sequences(scorer ? s.scorer : s.generator, vocab, mc.window);
      const TrainResult r = train_lm(mc, params, seqs, f.train, [](int epoch, int step, double loss) {
        if (step % 50 == 0) std::cerr << "epoch " << epoch << " step " << step << " loss " << loss << "\n";
      });
      const std::string out = c.path(scorer ? "scorer.bin" : "lm.bin");
      fs::create_directories(c.data_dir);
      save_model(out, mc, params, {{"train", r.to_json()}, {"train_config", f.train.to_json()}});
      std::cout << (scorer ? "scorer" : "lm") << ": nll " << r.initial_nll << " -> " << r.final_nll << ", "
                << params.parameter_count() << " params, checksum " << checksum_hex(params.checksum()) << " -> "
                << out << "\n";
    } else if (*tdisc) {
      const Vocab vocab = Vocab::load(c.path("vocab.txt"));
      const auto lm = load_frozen(c.path("lm.bin"));
      const CorpusSplits s = load_corpus_splits(c.corpus());
      disc_cfg.seed = c.seed;
      DiscriminatorReport rep;
      const std::string before = checksum_hex(lm->params().checksum());
      const Discriminator d = train_discriminator(*lm, vocab, s.disc_train, s.disc_test, disc_cfg, &rep);
      save_discriminator(c.path("discriminator.bin"), d, {{"report", rep.to_json()}});
      BowTrainConfig bow;
      bow.seed = c.seed;
      const BowClassifier ext = train_bow_classifier(vocab, s.external, bow);
      require_disjoint(d.train_ids, ext.train_ids, "discriminator and external classifier data");
      save_bow_classifier(c.path("external.bin"), ext);
      std::cout << "discriminator: train F1 " << rep.train_f1 << ", test F1 " << rep.test_f1 << "; lm checksum "
                << before << " -> " << checksum_hex(lm->params().checksum()) << "\n"
                << "external classifier: accuracy on discriminator test split "
                << bow_accuracy(ext, vocab, s.disc_test) << "\n";
    } else if (*wds) {
      const Vocab vocab = Vocab::load(c.path("vocab.txt"));
      const CorpusSplits s = load_corpus_splits(c.corpus());
      save_token_scores(c.path("wd_scores.bin"), build_token_scores(vocab, s.disc_train));
      std::cout << "wd scores -> " << c.path("wd_scores.bin") << "\n";
    } else if (*gen) {
      gen_flags.finish();
      const Method m = parse_method(method);
      if (m != Method::kDG && attribute.empty()) throw std::invalid_argument("--attribute is required for " + method);
      const Artifacts a = load_artifacts(c, m, attribute, false);
      const auto prefixes = prefixes_for(c, split);
      if (offset < 0 || offset + n > static_cast<int>(prefixes.size())) {
        throw std::invalid_argument("--offset/--count exceed the " + std::to_string(prefixes.size()) + " " + split +
                                    " prefixes");
      }
      std::vector<GenerationRecord> recs;
      if (append && !records_out.empty() && fs::exists(records_out)) recs = load_records(records_out);
      for (int i = 0; i < n; ++i) {
        GenerationRequest req;
        req.method = m;
        req.attribute = attribute;
        req.history = prefixes[offset + i];
        req.gen = gen_flags.gen;
        req.gen.seed = c.seed + static_cast<std::uint64_t>(offset + i);
        req.pplm = gen_flags.pplm;
        req.wd.weight = gen_flags.w;
        recs.push_back(generate(a.models(), req));
        progress_line(method, i + 1, n);
      }
      if (records_out.empty()) {
        records_out = c.path("records/" + method + (attribute.empty() ? "" : "_" + attribute_stem(attribute)) + ".jsonl");
      }
      if (fs::path(records_out).has_parent_path()) fs::create_directories(fs::path(records_out).parent_path());
      save_records(records_out, recs);
      std::cout << n << " " << method << " records -> " << records_out << "\n";
      if (!recs.empty()) std::cout << "example: " << recs.back().response_text << "\n";
    } else if (*dist) {
      dist_flags.finish();
      const Artifacts a = load_artifacts(c, Method::kPP, distill_attr, true);
      dist_flags.gen.seed = c.seed;
      const auto prefixes = prefixes_for(c, "train");
      const DistillDataset d =
          distill(a.models(), prefixes, distill_attr, dist_flags.pplm, dist_flags.gen, distill_count,
                  [](int done, int total) { progress_line("distill", done, total); });
      const std::string out = c.path("distill/" + attribute_stem(a.disc->attribute(distill_attr).str()) + ".jsonl");
      fs::create_directories(c.path("distill"));
      d.save(out);
      std::cout << d.records.size() << " records (" << d.skipped.size() << " skipped) -> " << out << "\n";
    } else if (*tad) {
      const auto lm = load_frozen(c.path("lm.bin"));
      const Discriminator disc = load_discriminator(c.path("discriminator.bin"));
      const std::string stem = attribute_stem(disc.attribute(ad_attr).str());
      const DistillDataset d = DistillDataset::load(c.path("distill/" + stem + ".jsonl"));
      ad_cfg.init_seed = c.seed;
      ad_cfg.train.seed = c.seed;
      AdapterTrainReport rep;
      const std::string before = checksum_hex(lm->params().checksum());
      const AdapterStack stack = train_adapters(*lm, d, ad_cfg, &rep, [](int epoch, int step, double loss) {
        if (step % 50 == 0) std::cerr << "epoch " << epoch << " step " << step << " loss " << loss << "\n";
      });
      const std::string out = c.path("adapters/" + stem + ".bin");
      fs::create_directories(c.path("adapters"));
      save_adapters(out, lm->config(), stack);
      std::cout << "adapters: " << rep.adapter_params << " params (" << 100.0 * rep.adapter_fraction
                << "% of the base), " << rep.records_used << " records, nll " << rep.train.initial_nll << " -> "
                << rep.train.final_nll << "; lm checksum " << before << " -> " << checksum_hex(lm->params().checksum())
                << " -> " << out << "\n";
    } else if (*ev) {
      if (eval_records.empty()) {
        std::cerr << "evaluate: no generation records given.\n"
                  << "expected inputs:\n"
                  << "  --records FILE.jsonl [--records ...]  generation records from pplm-generate\n"
                  << "  " << c.path("lm.bin") << "            generator LM (internal discriminator features)\n"
                  << "  " << c.path("scorer.bin") << "        separately trained perplexity scorer\n"
                  << "  " << c.path("discriminator.bin") << " attribute discriminator\n"
                  << "  " << c.path("external.bin") << "      external classifier\n";
        return 2;
      }
      std::vector<GenerationRecord> recs;
      for (const auto& f : eval_records) {
        auto r = load_records(f);
        recs.insert(recs.end(), r.begin(), r.end());
      }
      if (recs.empty()) {
        std::cerr << "evaluate: the given files contain no generation records\n";
        return 2;
      }
      const auto lm = load_frozen(c.path("lm.bin"));
      const auto scorer = load_frozen(c.path("scorer.bin"));
      const Discriminator disc = load_discriminator(c.path("discriminator.bin"));
      const BowClassifier ext = load_bow_classifier(c.path("external.bin"));
      const EvalReport rep = evaluate(recs, {lm.get(), scorer.get(), &disc, &ext});
      std::cout << rep.table();
      if (!eval_out.empty()) write_text(eval_out, rep.to_json().dump(2) + "\n");
    } else if (*sw) {
      sweep_flags.finish();
      const Artifacts a = load_artifacts(c, Method::kPP, sweep_attr, true);
      const auto scorer = load_frozen(c.path("scorer.bin"));
      const BowClassifier ext = load_bow_classifier(c.path("external.bin"));
      auto prefixes = prefixes_for(c, "heldout");
      prefixes.resize(std::min<std::size_t>(prefixes.size(), sweep_n));
      SweepConfig cfg;
      cfg.attribute = sweep_attr;
      cfg.alphas = parse_doubles(alphas);
      cfg.iterations = parse_ints<int>(ps);
      cfg.seeds = parse_ints<std::uint64_t>(seeds);
      for (auto& s : cfg.seeds) s += c.seed - 1;
      cfg.pplm = sweep_flags.pplm;
      cfg.gen = sweep_flags.gen;
      const SweepResult r = sweep_grid(a.models(), prefixes, cfg, *scorer, ext,
                                       [](int done, int total) { std::cerr << "sweep " << done << "/" << total << "\n"; });
      if (sweep_out.empty()) sweep_out = c.path("sweep.csv");
      write_text(sweep_out, r.csv());
      std::cout << r.csv() << "-> " << sweep_out << "\n";
    } else if (*bn) {
      if (!pin_to_one_cpu()) std::cerr << "bench: could not pin to one CPU, timings may be noisy\n";
      Artifacts a = load_artifacts(c, Method::kPP, bench_attr, true);
      const std::string canonical = a.disc->attribute(bench_attr).str();
      if (fs::exists(c.path("wd_scores.bin"))) a.scores = load_token_scores(c.path("wd_scores.bin"));
      std::optional<AdapterStack> stack;
      const std::string ad_path = c.path("adapters/" + attribute_stem(canonical) + ".bin");
      if (fs::exists(ad_path)) stack = load_adapters(ad_path, a.lm->config());
      std::vector<BenchMethod> methods;
      GenerationRequest base;
      base.attribute = canonical;
      methods.push_back({"DG", base, nullptr});
      if (a.scores) {
        GenerationRequest r = base;
        r.method = Method::kWD;
        r.wd.weight = 2.0;
        methods.push_back({"WD", r, nullptr});
      }
      {
        GenerationRequest r = base;
        r.method = Method::kPP;
        r.pplm.iterations = bench_p;
        r.pplm.alpha = bench_alpha;
        methods.push_back({"PP(p=" + std::to_string(bench_p) + ")", r, nullptr});
      }
      if (stack) {
        GenerationRequest r = base;
        r.method = Method::kAD;
        methods.push_back({"AD", r, &*stack});
      }
      auto prefixes = prefixes_for(c, "heldout");
      prefixes.resize(std::min<std::size_t>(prefixes.size(), bench_n));
      bench_cfg.seed = c.seed;
      std::cout << bench_table(latency_bench(a.models(), methods, prefixes, bench_cfg));
    } else if (*sv) {
      Service service(load_service_artifacts(c.data_dir), c.seed);
      HttpServer server(service);
      const int bound = server.bind(host, port);
      std::cout << "listening on http://" << host << ":" << bound << "\nport " << bound << std::endl;
      server.listen();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
