#include "steerlm/attribute/bow_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "steerlm/autodiff/ops.hpp"
#include "steerlm/model/checkpoint.hpp"
#include "steerlm/model/train.hpp"

namespace steerlm {
namespace {

Tensor features(std::span<const int> tokens, int vocab) {
  Tensor f({1, vocab});
  if (tokens.empty()) return f;
  const Scalar w = Scalar(1) / static_cast<Scalar>(tokens.size());
  for (int t : tokens) {
    if (t < 0 || t >= vocab) throw std::out_of_range("bag-of-words: token id outside the classifier vocabulary");
    f[t] += w;
  }
  return f;
}

}  // namespace

int BowClassifier::class_index(const std::string& name) const {
  std::string cls = name;
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    if (name.substr(0, colon) != dataset) {
      throw std::invalid_argument("classifier for '" + dataset + "' cannot score attribute '" + name + "'");
    }
    cls = name.substr(colon + 1);
  }
  for (int i = 0; i < num_classes(); ++i) {
    if (class_names[i] == cls) return i;
  }
  throw std::invalid_argument("classifier for '" + dataset + "' has no class '" + cls + "'");
}

std::vector<double> BowClassifier::probs(std::span<const int> tokens) const {
  const int v = weight.dim(0), c = num_classes();
  const Tensor f = features(tokens, v);
  std::vector<double> z(c);
  for (int j = 0; j < c; ++j) z[j] = bias[j];
  for (int t = 0; t < v; ++t) {
    if (f[t] == 0) continue;
    for (int j = 0; j < c; ++j) z[j] += static_cast<double>(f[t]) * weight.at(t, j);
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (auto& x : z) s += x = std::exp(x - mx);
  for (auto& x : z) x /= s;
  return z;
}

int BowClassifier::predict(std::span<const int> tokens) const {
  const auto p = probs(tokens);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

BowClassifier train_bow_classifier(const Vocab& vocab, const LabeledDataset& data, const BowTrainConfig& cfg) {
  if (data.examples.empty()) throw std::invalid_argument("train_bow_classifier: empty dataset");
  const int v = vocab.size(), c = data.num_classes();
  BowClassifier clf;
  clf.dataset = data.name;
  clf.class_names = data.class_names;
  clf.weight = Tensor({v, c});
  clf.bias = Tensor({c});
  std::vector<Tensor> x;
  std::vector<TrainExample> examples;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    clf.train_ids.push_back(data.examples[i].id);
    x.push_back(features(vocab.encode(data.examples[i].text), v));
    examples.push_back({{static_cast<int>(i)}, {data.examples[i].label}});
  }
  LogitsBuilder build = [&](ad::Graph& g, const TrainExample& ex) {
    ad::Var w = g.borrow(clf.weight, true);
    ad::Var b = g.borrow(clf.bias, true);
    return std::make_pair(ad::linear(g.borrow(x[ex.inputs[0]]), w, b), std::vector<ad::Var>{w, b});
  };
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.adam = cfg.adam;
  tc.seed = cfg.seed;
  run_training({&clf.weight, &clf.bias}, examples, tc, build);
  return clf;
}

double bow_accuracy(const BowClassifier& clf, const Vocab& vocab, const LabeledDataset& data) {
  if (data.examples.empty()) return 0.0;
  int hit = 0;
  for (const auto& e : data.examples) hit += clf.predict(vocab.encode(e.text)) == e.label;
  return static_cast<double>(hit) / data.examples.size();
}

void require_disjoint(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b, const std::string& what) {
  const std::unordered_set<std::int64_t> sa(a.begin(), a.end());
  for (auto id : b) {
    if (sa.count(id)) throw std::logic_error(what + ": example id " + std::to_string(id) + " appears in both sets");
  }
}

void save_bow_classifier(const std::string& path, const BowClassifier& c) {
  Container k;
  k.meta["kind"] = "bow_classifier";
  k.meta["dataset"] = c.dataset;
  k.meta["class_names"] = c.class_names;
  k.meta["train_ids"] = c.train_ids;
  k.tensors.push_back({"weight", c.weight});
  k.tensors.push_back({"bias", c.bias});
  write_container(path, k);
}

BowClassifier load_bow_classifier(const std::string& path) {
  const Container k = read_container(path);
  if (k.meta.value("kind", "") != "bow_classifier") throw std::runtime_error(path + ": not a bag-of-words classifier");
  BowClassifier c;
  c.dataset = k.meta.at("dataset").get<std::string>();
  c.class_names = k.meta.at("class_names").get<std::vector<std::string>>();
  c.train_ids = k.meta.value("train_ids", std::vector<std::int64_t>{});
  c.weight = k.get("weight");
  c.bias = k.get("bias");
  return c;
}

}  // namespace steerlm
