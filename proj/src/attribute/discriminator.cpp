#include "steerlm/attribute/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "steerlm/autodiff/ops.hpp"
#include "steerlm/model/checkpoint.hpp"
#include "steerlm/model/train.hpp"

namespace steerlm {

AttributeId Discriminator::attribute(const std::string& name) const {
  std::string cls = name;
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    if (name.substr(0, colon) != dataset) {
      throw std::out_of_range("attribute '" + name + "' does not belong to dataset '" + dataset + "'");
    }
    cls = name.substr(colon + 1);
  }
  for (int i = 0; i < num_classes(); ++i) {
    if (class_names[i] == cls) return {dataset, i, cls};
  }
  std::string valid;
  for (const auto& c : class_names) valid += (valid.empty() ? "" : ", ") + dataset + ":" + c;
  throw std::out_of_range("unknown attribute '" + name + "'; available: " + valid);
}

std::uint64_t Discriminator::checksum() const {
  Fnv1a h;
  h.update(dataset);
  h.update(weight);
  h.update(bias);
  return h.digest();
}

ad::Var pool_hidden(ad::Var hidden) {
  const Shape& s = hidden.shape();
  if (s.size() != 2 || s[0] < 1) throw std::invalid_argument("pool_hidden: need at least one state");
  return ad::reshape(ad::mean(hidden, 0), {1, s[1]});
}

ad::Var pool_hidden(ad::Var hidden, std::span<const int> tokens) {
  const Shape& s = hidden.shape();
  if (s.size() != 2 || static_cast<std::size_t>(s[0]) != tokens.size()) {
    throw ShapeError("pool_hidden: " + std::to_string(tokens.size()) + " tokens for states " + shape_str(s));
  }
  std::vector<int> keep;
  for (int i = 0; i < s[0]; ++i) {
    if (tokens[i] != Vocab::kPad) keep.push_back(i);
  }
  if (keep.empty()) throw std::invalid_argument("pool_hidden: every position is padding");
  if (static_cast<int>(keep.size()) == s[0]) return pool_hidden(hidden);
  // Gather the kept rows; the embedding op doubles as a differentiable gather.
  return pool_hidden(ad::embedding(hidden, keep));
}

ad::Var discriminator_logits(ad::Graph& g, const Discriminator& d, ad::Var pooled) {
  if (pooled.shape() != Shape{1, d.width()}) {
    throw ShapeError("discriminator: pooled state " + shape_str(pooled.shape()) + " vs width " +
                     std::to_string(d.width()));
  }
  return ad::linear(pooled, g.borrow(d.weight), g.borrow(d.bias));
}

ad::Var attribute_loss(ad::Graph& g, const Discriminator& d, ad::Var pooled, const AttributeId& a) {
  if (a.dataset != d.dataset || a.class_index < 0 || a.class_index >= d.num_classes()) {
    throw std::out_of_range("attribute " + a.str() + " is not handled by the '" + d.dataset + "' discriminator");
  }
  const int label[1] = {a.class_index};
  return ad::cross_entropy(discriminator_logits(g, d, pooled), label);
}

std::vector<double> class_probs(const Discriminator& d, const Tensor& pooled) {
  ad::Graph g;
  const Tensor row = pooled.reshaped({1, static_cast<int>(pooled.size())});
  const Tensor& p = ad::softmax(discriminator_logits(g, d, g.borrow(row)), 1).value();
  return std::vector<double>(p.data(), p.data() + p.size());
}

Tensor response_features(const TransformerLM& lm, std::span<const int> context, std::span<const int> response) {
  if (response.empty()) throw std::invalid_argument("response_features: empty response");
  std::vector<int> tokens{Vocab::kBos};
  tokens.insert(tokens.end(), context.begin(), context.end());
  tokens.insert(tokens.end(), response.begin(), response.end());
  const FullOutput f = lm.forward_full(tokens);
  const int d = lm.config().width;
  const int first = static_cast<int>(tokens.size() - response.size());
  Tensor out({1, d});
  for (int r = first; r < static_cast<int>(tokens.size()); ++r) {
    for (int c = 0; c < d; ++c) out[c] += f.hidden.at(r, c);
  }
  for (int c = 0; c < d; ++c) out[c] /= static_cast<Scalar>(response.size());
  return out;
}

double score_response(const TransformerLM& lm, const Discriminator& d, std::span<const int> context,
                      std::span<const int> response, const AttributeId& a) {
  ad::Graph g;
  return attribute_loss(g, d, g.constant(response_features(lm, context, response)), a).value()[0];
}

nlohmann::json DiscriminatorTrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"seed", seed}, {"adam", adam.to_json()}};
}

nlohmann::json DiscriminatorReport::to_json() const {
  return {{"train_f1", train_f1},
          {"test_f1", test_f1},
          {"train_accuracy", train_accuracy},
          {"test_accuracy", test_accuracy},
          {"epoch_loss", epoch_loss},
          {"lm_checksum", lm_checksum}};
}

namespace {

std::vector<Tensor> sentence_features(const TransformerLM& lm, const Vocab& vocab, const LabeledDataset& data) {
  std::vector<Tensor> out;
  out.reserve(data.examples.size());
  for (const auto& e : data.examples) {
    const std::vector<int> ids = vocab.encode(e.text);
    if (ids.empty()) throw std::invalid_argument("empty sentence in labeled dataset (id " + std::to_string(e.id) + ")");
    out.push_back(response_features(lm, {}, ids));
  }
  return out;
}

double accuracy(const std::vector<int>& gold, const std::vector<int>& pred) {
  if (gold.empty()) return 0.0;
  int hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += gold[i] == pred[i];
  return static_cast<double>(hit) / gold.size();
}

std::vector<int> labels_of(const LabeledDataset& d) {
  std::vector<int> out;
  for (const auto& e : d.examples) out.push_back(e.label);
  return out;
}

}  // namespace

std::vector<int> predict(const Discriminator& d, const std::vector<Tensor>& features) {
  std::vector<int> out;
  for (const auto& f : features) {
    const auto p = class_probs(d, f);
    out.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
  }
  return out;
}

double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred, int classes) {
  if (gold.size() != pred.size()) throw std::invalid_argument("macro_f1: length mismatch");
  double total = 0;
  for (int c = 0; c < classes; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      tp += gold[i] == c && pred[i] == c;
      fp += gold[i] != c && pred[i] == c;
      fn += gold[i] == c && pred[i] != c;
    }
    total += tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return total / classes;
}

Discriminator train_discriminator(const TransformerLM& lm, const Vocab& vocab, const LabeledDataset& train,
                                  const LabeledDataset& test, const DiscriminatorTrainConfig& cfg,
                                  DiscriminatorReport* report) {
  if (train.examples.empty()) throw std::invalid_argument("train_discriminator: empty training set");
  if (train.num_classes() < 2) throw std::invalid_argument("train_discriminator: need at least two classes");
  const std::uint64_t before = lm.params().checksum();

  const int d = lm.config().width;
  const int c = train.num_classes();
  Discriminator disc;
  disc.dataset = train.name;
  disc.class_names = train.class_names;
  disc.weight = Tensor({d, c});
  disc.bias = Tensor({c});
  for (const auto& e : train.examples) disc.train_ids.push_back(e.id);

  const std::vector<Tensor> train_x = sentence_features(lm, vocab, train);
  std::vector<TrainExample> examples;
  for (std::size_t i = 0; i < train.examples.size(); ++i) {
    examples.push_back({{static_cast<int>(i)}, {train.examples[i].label}});
  }
  LogitsBuilder build = [&](ad::Graph& g, const TrainExample& ex) {
    ad::Var w = g.borrow(disc.weight, true);
    ad::Var b = g.borrow(disc.bias, true);
    ad::Var logits = ad::linear(g.borrow(train_x[ex.inputs[0]]), w, b);
    return std::make_pair(logits, std::vector<ad::Var>{w, b});
  };
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.adam = cfg.adam;
  tc.seed = cfg.seed;
  const TrainResult tr = run_training({&disc.weight, &disc.bias}, examples, tc, build);

  if (lm.params().checksum() != before) throw std::logic_error("train_discriminator: base LM parameters changed");
  if (report) {
    const auto train_pred = predict(disc, train_x);
    const auto train_gold = labels_of(train);
    report->train_f1 = macro_f1(train_gold, train_pred, c);
    report->train_accuracy = accuracy(train_gold, train_pred);
    if (!test.examples.empty()) {
      const auto test_pred = predict(disc, sentence_features(lm, vocab, test));
      const auto test_gold = labels_of(test);
      report->test_f1 = macro_f1(test_gold, test_pred, c);
      report->test_accuracy = accuracy(test_gold, test_pred);
    }
    report->epoch_loss = tr.epoch_loss;
    report->lm_checksum = checksum_hex(before);
  }
  return disc;
}

void save_discriminator(const std::string& path, const Discriminator& d, const nlohmann::json& extra) {
  Container c;
  c.meta = extra.is_object() ? extra : nlohmann::json::object();
  c.meta["kind"] = "discriminator";
  c.meta["dataset"] = d.dataset;
  c.meta["class_names"] = d.class_names;
  c.meta["train_ids"] = d.train_ids;
  c.meta["checksum"] = checksum_hex(d.checksum());
  c.tensors.push_back({"weight", d.weight});
  c.tensors.push_back({"bias", d.bias});
  write_container(path, c);
}

Discriminator load_discriminator(const std::string& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", "") != "discriminator") throw std::runtime_error(path + ": not a discriminator");
  Discriminator d;
  d.dataset = c.meta.at("dataset").get<std::string>();
  d.class_names = c.meta.at("class_names").get<std::vector<std::string>>();
  d.train_ids = c.meta.value("train_ids", std::vector<std::int64_t>{});
  d.weight = c.get("weight");
  d.bias = c.get("bias");
  if (d.weight.rank() != 2 || d.weight.dim(1) != d.num_classes() || d.bias.shape() != Shape{d.num_classes()}) {
    throw ShapeError(path + ": discriminator tensors do not match its class list");
  }
  if (!d.weight.all_finite() || !d.bias.all_finite()) throw std::runtime_error(path + ": non-finite weights");
  return d;
}

}  // namespace steerlm
