#include "steerlm/steering/weighted_decoding.hpp"

#include <cmath>
#include <stdexcept>

#include "steerlm/model/checkpoint.hpp"

namespace steerlm {

int TokenScores::class_index(const std::string& name) const {
  std::string cls = name;
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    if (name.substr(0, colon) != dataset) {
      throw std::out_of_range("score table for '" + dataset + "' cannot serve attribute '" + name + "'");
    }
    cls = name.substr(colon + 1);
  }
  for (int i = 0; i < num_classes(); ++i) {
    if (class_names[i] == cls) return i;
  }
  throw std::out_of_range("score table for '" + dataset + "' has no class '" + cls + "'");
}

std::span<const Scalar> TokenScores::row(int c) const {
  if (c < 0 || c >= num_classes()) throw std::out_of_range("score table: class index out of range");
  return {scores.data() + static_cast<std::size_t>(c) * vocab_size(), static_cast<std::size_t>(vocab_size())};
}

TokenScores build_token_scores(const Vocab& vocab, const LabeledDataset& data) {
  const int c = data.num_classes();
  if (c < 2) throw std::invalid_argument("build_token_scores: need at least two classes");
  const int v = vocab.size();
  std::vector<std::vector<double>> counts(c, std::vector<double>(v, 0.0));
  std::vector<double> totals(c, 0.0);
  for (const auto& e : data.examples) {
    if (e.label < 0 || e.label >= c) throw std::out_of_range("build_token_scores: label out of range");
    for (int t : vocab.encode(e.text)) {
      counts[e.label][t] += 1;
      totals[e.label] += 1;
    }
  }
  double all = 0;
  for (double t : totals) all += t;
  TokenScores s;
  s.dataset = data.name;
  s.class_names = data.class_names;
  s.scores = Tensor({c, v});
  for (int a = 0; a < c; ++a) {
    const double rest_total = all - totals[a];
    for (int t = Vocab::kNumReserved; t < v; ++t) {
      double rest = 0;
      for (int b = 0; b < c; ++b) rest += b == a ? 0 : counts[b][t];
      const double in = (counts[a][t] + 1) / (totals[a] + v);
      const double out = (rest + 1) / (rest_total + v);
      s.scores.at(a, t) = static_cast<Scalar>(std::log(in) - std::log(out));
    }
  }
  return s;
}

void WDConfig::validate() const {
  if (!(weight >= 0) || !std::isfinite(weight)) throw std::invalid_argument("w: must be a finite value >= 0");
}

void save_token_scores(const std::string& path, const TokenScores& s) {
  Container k;
  k.meta["kind"] = "token_scores";
  k.meta["dataset"] = s.dataset;
  k.meta["class_names"] = s.class_names;
  k.tensors.push_back({"scores", s.scores});
  write_container(path, k);
}

TokenScores load_token_scores(const std::string& path) {
  const Container k = read_container(path);
  if (k.meta.value("kind", "") != "token_scores") throw std::runtime_error(path + ": not a token score table");
  TokenScores s;
  s.dataset = k.meta.at("dataset").get<std::string>();
  s.class_names = k.meta.at("class_names").get<std::vector<std::string>>();
  s.scores = k.get("scores");
  if (s.scores.rank() != 2 || s.scores.dim(0) != s.num_classes()) throw ShapeError(path + ": bad score table shape");
  if (!s.scores.all_finite()) throw std::runtime_error(path + ": non-finite scores");
  return s;
}

}  // namespace steerlm
