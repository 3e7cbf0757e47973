#include "steerlm/text/synthetic.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace steerlm {
namespace {

const std::vector<std::string>& neutral_lexicon() {
  static const std::vector<std::string> words = {
      "i",     "you",  "we",    "they",  "it",     "the",  "a",     "this",   "that",  "is",
      "was",   "be",   "to",    "and",   "so",     "of",   "in",    "on",     "at",    "for",
      "with",  "my",   "your",  "our",   "just",   "very", "some",  "about",  "then",  "there",
      "here",  "have", "had",   "get",   "go",     "think", "know", "see",    "want",  "make",
      "time",  "day",  "night", "home",  "friend", "people", "thing", "place", "week", "today",
      "now",   "also", "more",  "much",  "well",   "yes",  "okay",  "still",  "back",  "out"};
  return words;
}

const std::map<std::string, std::vector<std::string>>& class_lexicons() {
  static const std::map<std::string, std::vector<std::string>> lex = {
      {"positive", {"great", "wonderful", "happy", "lovely", "amazing", "excellent", "beautiful", "fantastic",
                    "awesome", "delightful", "glad", "superb", "brilliant", "pleasant", "joyful", "cheerful",
                    "perfect", "nice", "fun", "love"}},
      {"negative", {"terrible", "horrible", "awful", "sad", "boring", "worst", "bad", "ugly", "dreadful",
                    "miserable", "annoying", "nasty", "gloomy", "painful", "poor", "hate", "angry", "upset",
                    "broken", "disappointing"}},
      {"question", {"what", "why", "how", "when", "where", "who", "which", "wonder", "curious", "maybe",
                    "perhaps", "whether", "ask", "guess", "unsure"}},
      {"statement", {"indeed", "certainly", "definitely", "clearly", "surely", "obviously", "truly",
                     "absolutely", "fact", "exactly", "sure", "known", "plainly", "naturally", "undoubtedly"}},
      {"business", {"market", "stock", "company", "money", "bank", "price", "trade", "profit", "store", "sales",
                    "economy", "budget", "invest", "shares", "finance"}},
      {"scitech", {"software", "android", "computer", "science", "data", "robot", "internet", "phone", "code",
                   "research", "laptop", "chip", "physics", "app", "network"}},
      {"sport", {"football", "hockey", "team", "game", "match", "goal", "player", "coach", "league", "tennis",
                 "soccer", "race", "stadium", "olympic", "basketball"}},
      {"world", {"election", "war", "country", "president", "minister", "government", "treaty", "border",
                 "nation", "leader", "parliament", "embassy", "crisis", "vote", "policy"}},
  };
  return lex;
}

std::string class_word(const std::string& cls, int i) {
  const auto& lex = class_lexicons();
  auto it = lex.find(cls);
  if (it != lex.end() && i < static_cast<int>(it->second.size())) return it->second[i];
  return cls + "_" + std::to_string(i);
}

class Generator {
 public:
  Generator(const SyntheticSpec& spec, SyntheticCorpus& corpus)
      : spec_(spec), corpus_(corpus), rng_(spec.seed) {
    const int n = static_cast<int>(corpus_.neutral_words.size());
    successors_.resize(n);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) successors_[i].push_back(pick(rng_));
    }
  }

  std::string sentence(int len, double rate, const std::vector<int>& classes, int force_facet) {
    std::vector<std::string> words;
    int state = uniform(static_cast<int>(corpus_.neutral_words.size()));
    bool has_class_word = false;
    const int facets = static_cast<int>(classes.size());
    for (int i = 0; i < len; ++i) {
      if (facets > 0 && bernoulli(rate)) {
        const int f = force_facet >= 0 ? force_facet : uniform(facets);
        words.push_back(draw(f, classes[f]));
        has_class_word = has_class_word || f == force_facet;
      } else {
        words.push_back(corpus_.neutral_words[state]);
        state = successors_[state][uniform(3)];
      }
    }
    if (force_facet >= 0 && !has_class_word) {
      words[uniform(len)] = draw(force_facet, classes[force_facet]);
    }
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out += ' ';
      out += words[i];
    }
    return out;
  }

  int uniform(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool bernoulli(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
  std::mt19937_64& rng() { return rng_; }

 private:
  const std::string& draw(int facet, int cls) {
    const auto& words = corpus_.partitions[facet][cls];
    return words[uniform(static_cast<int>(words.size()))];
  }

  const SyntheticSpec& spec_;
  SyntheticCorpus& corpus_;
  std::mt19937_64 rng_;
  std::vector<std::vector<int>> successors_;
};

}  // namespace

SyntheticSpec preset_spec(const std::string& name) {
  SyntheticSpec spec;
  const FacetSpec sentiment{"sentiment", {"positive", "negative"}, 20, 0.0};
  const FacetSpec act{"act", {"question", "statement"}, 15, 0.0};
  const FacetSpec topic{"topic", {"business", "scitech", "sport", "world"}, 15, 0.0};
  if (name == "sentiment") {
    spec.facets = {sentiment};
  } else if (name == "act") {
    spec.facets = {act};
  } else if (name == "topic") {
    spec.facets = {topic};
  } else if (name == "all") {
    spec.facets = {sentiment, act, topic};
  } else {
    throw std::invalid_argument("unknown corpus preset '" + name + "' (sentiment|act|topic|all)");
  }
  return spec;
}

SyntheticCorpus make_synthetic_attribute_corpus(const SyntheticSpec& spec) {
  if (spec.neutral_words < 1) throw std::invalid_argument("synthetic corpus needs at least one neutral word");
  SyntheticCorpus corpus;
  std::set<std::string> used;
  for (int i = 0; i < spec.neutral_words; ++i) {
    const auto& lex = neutral_lexicon();
    std::string w = i < static_cast<int>(lex.size()) ? lex[i] : "w" + std::to_string(i);
    corpus.neutral_words.push_back(w);
    used.insert(w);
  }
  for (const auto& facet : spec.facets) {
    if (facet.class_names.size() < 2) throw std::invalid_argument("facet '" + facet.name + "' needs >= 2 classes");
    if (facet.words_per_class < 1) throw std::invalid_argument("facet '" + facet.name + "' has empty partitions");
    if (facet.shared_fraction < 0.0 || facet.shared_fraction >= 1.0) {
      throw std::invalid_argument("facet '" + facet.name + "' shared_fraction must be in [0,1)");
    }
    const int shared = static_cast<int>(facet.shared_fraction * facet.words_per_class + 0.5);
    std::vector<std::string> pool;
    for (int i = 0; i < shared; ++i) pool.push_back(facet.name + "_shared_" + std::to_string(i));
    std::vector<std::vector<std::string>> parts;
    for (const auto& cls : facet.class_names) {
      std::vector<std::string> words = pool;
      for (int i = 0; i < facet.words_per_class - shared; ++i) words.push_back(class_word(cls, i));
      parts.push_back(std::move(words));
    }
    for (const auto& p : parts) {
      for (const auto& w : p) used.insert(w);
    }
    corpus.partitions.push_back(std::move(parts));
  }
  const std::size_t needed = used.size() + Vocab::kNumReserved;
  if (needed > static_cast<std::size_t>(spec.vocab_cap)) {
    throw std::invalid_argument("word partitions need " + std::to_string(needed) + " vocabulary entries, cap is " +
                                std::to_string(spec.vocab_cap));
  }

  Generator gen(spec, corpus);
  std::int64_t next_id = 0;
  const int facets = static_cast<int>(spec.facets.size());
  for (int f = 0; f < facets; ++f) {
    LabeledDataset ds;
    ds.name = spec.facets[f].name;
    ds.class_names = spec.facets[f].class_names;
    std::vector<int> classes(facets, 0);
    for (int c = 0; c < ds.num_classes(); ++c) {
      for (int k = 0; k < spec.labeled_per_class; ++k) {
        // Only facet f's words appear, so the label is recoverable from them.
        std::vector<int> only(facets, 0);
        only[f] = c;
        const int len = gen.uniform(spec.labeled_min_len, spec.labeled_max_len);
        ds.examples.push_back({next_id++, gen.sentence(len, spec.labeled_class_rate, only, f), c});
      }
    }
    std::shuffle(ds.examples.begin(), ds.examples.end(), gen.rng());
    corpus.labeled.push_back(std::move(ds));
  }

  for (int d = 0; d < spec.dialogues; ++d) {
    Dialogue dlg;
    dlg.id = next_id++;
    const int turns = gen.uniform(spec.min_turns, spec.max_turns);
    std::vector<int> classes(facets);
    for (int f = 0; f < facets; ++f) classes[f] = gen.uniform(spec.facets[f].class_names.size());
    for (int t = 0; t < turns; ++t) {
      if (t > 0) {
        for (int f = 0; f < facets; ++f) {
          if (!gen.bernoulli(spec.context_agreement)) classes[f] = gen.uniform(spec.facets[f].class_names.size());
        }
      }
      const int len = gen.uniform(spec.turn_min_len, spec.turn_max_len);
      dlg.turns.push_back(gen.sentence(len, spec.dialogue_class_rate, classes, -1));
    }
    corpus.dialogues.push_back(std::move(dlg));
  }
  return corpus;
}

std::pair<LabeledDataset, LabeledDataset> split_labeled(const LabeledDataset& data, double first_fraction,
                                                        std::uint64_t seed) {
  const IndexSplit s = split_indices(static_cast<int>(data.examples.size()), first_fraction, seed);
  LabeledDataset a{data.name, data.class_names, {}};
  LabeledDataset b{data.name, data.class_names, {}};
  for (int i : s.train) a.examples.push_back(data.examples[i]);
  for (int i : s.held_out) b.examples.push_back(data.examples[i]);
  return {std::move(a), std::move(b)};
}

}  // namespace steerlm
