#include "steerlm/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace steerlm {

double perplexity(const TransformerLM& scorer, std::span<const int> context, std::span<const int> response) {
  if (response.empty()) throw std::invalid_argument("perplexity: empty response");
  std::vector<int> tokens{Vocab::kBos};
  tokens.insert(tokens.end(), context.begin(), context.end());
  tokens.insert(tokens.end(), response.begin(), response.end());
  const int v = scorer.config().vocab;
  for (int id : tokens) {
    if (id < 0 || id >= v) throw std::out_of_range("perplexity: token id " + std::to_string(id) + " not in vocab");
  }
  const FullOutput f = scorer.forward_full(std::span<const int>(tokens).first(tokens.size() - 1));
  // Geometric mean of 1/p taken relative to the first position, so equal
  // per-token probabilities give exactly 1/p (a uniform scorer gives V).
  const std::size_t n = tokens.size() - 1;
  double first = 0.0, first_log = 0.0, log_ratio = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar* row = f.logits.data() + i * v;
    double mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0;
    for (int j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double d = static_cast<double>(row[tokens[i + 1]]) - mx;
    const double log_inv_p = std::log(z) - d;
    if (i == 0) {
      first = z / std::exp(d);
      first_log = log_inv_p;
    }
    log_ratio += log_inv_p - first_log;
  }
  return first * std::exp(log_ratio / static_cast<double>(n));
}

std::string DistinctResult::coverage_note() const {
  if (skipped == 0) return "";
  return std::to_string(skipped) + " response(s) shorter than n skipped";
}

DistinctResult distinct_n(const std::vector<std::vector<int>>& responses, int n) {
  if (n < 1) throw std::invalid_argument("distinct_n: n must be >= 1");
  DistinctResult r;
  std::set<std::vector<int>> seen;
  for (const auto& resp : responses) {
    if (static_cast<int>(resp.size()) < n) {
      ++r.skipped;
      continue;
    }
    for (std::size_t i = 0; i + n <= resp.size(); ++i) {
      seen.emplace(resp.begin() + i, resp.begin() + i + n);
      ++r.total;
    }
  }
  r.unique = static_cast<long>(seen.size());
  r.ratio = r.total ? static_cast<double>(r.unique) / static_cast<double>(r.total) : 0.0;
  return r;
}

namespace {

int external_class(const BowClassifier& clf, const std::string& attribute) {
  const auto colon = attribute.find(':');
  if (colon != std::string::npos && attribute.substr(0, colon) != clf.dataset) {
    throw std::invalid_argument("external classifier for '" + clf.dataset + "' cannot score attribute '" +
                                attribute + "'");
  }
  return clf.class_index(attribute);
}

}  // namespace

double external_score(const BowClassifier& clf, const std::vector<std::vector<int>>& responses,
                      const std::string& attribute) {
  if (responses.empty()) throw std::invalid_argument("external_score: no responses");
  const int c = external_class(clf, attribute);
  int hit = 0;
  for (const auto& r : responses) hit += clf.predict(r) == c;
  return static_cast<double>(hit) / static_cast<double>(responses.size());
}

double external_loss(const BowClassifier& clf, const std::vector<std::vector<int>>& responses,
                     const std::string& attribute) {
  if (responses.empty()) throw std::invalid_argument("external_loss: no responses");
  const int c = external_class(clf, attribute);
  double sum = 0;
  for (const auto& r : responses) sum -= std::log(std::max(clf.probs(r)[c], 1e-300));
  return sum / static_cast<double>(responses.size());
}

const MethodSummary& EvalReport::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw std::out_of_range("report has no method '" + name + "'");
}

const EvalRow& EvalReport::row(const std::string& method, const std::string& attribute) const {
  for (const auto& r : rows) {
    if (r.method == method && r.attribute == attribute) return r;
  }
  throw std::out_of_range("report has no row " + method + " / " + attribute);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"rows", nlohmann::json::array()}, {"methods", nlohmann::json::array()}};
  for (const auto& r : rows) {
    j["rows"].push_back({{"method", r.method},
                         {"attribute", r.attribute},
                         {"count", r.count},
                         {"ppl", r.ppl},
                         {"dist1", r.dist1},
                         {"dist2", r.dist2},
                         {"dist3", r.dist3},
                         {"discrim", r.discrim},
                         {"external", r.external},
                         {"attribute_loss", r.attribute_loss},
                         {"ms_per_token", r.ms_per_token},
                         {"coverage", r.coverage}});
  }
  for (const auto& m : methods) {
    j["methods"].push_back({{"method", m.method},
                            {"ppl", m.ppl},
                            {"dist1", m.dist1},
                            {"dist2", m.dist2},
                            {"dist3", m.dist3},
                            {"discrim", m.discrim},
                            {"score", m.score},
                            {"ms_per_token", m.ms_per_token}});
  }
  return j;
}

std::string EvalReport::table() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-6s %-22s %5s %8s %6s %6s %6s %8s %8s\n", "Method", "Attribute", "N", "Ppl",
                "Dist1", "Dist2", "Dist3", "Discrim", "Score");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-6s %-22s %5d %8.2f %6.3f %6.3f %6.3f %8.2f %8.2f\n", r.method.c_str(),
                  r.attribute.c_str(), r.count, r.ppl, r.dist1, r.dist2, r.dist3, 100 * r.discrim, 100 * r.external);
    out << buf;
  }
  out << '\n';
  for (const auto& m : methods) {
    std::snprintf(buf, sizeof(buf), "%-6s %-22s %5s %8.2f %6.3f %6.3f %6.3f %8.2f %8.2f\n", m.method.c_str(), "(mean)",
                  "", m.ppl, m.dist1, m.dist2, m.dist3, 100 * m.discrim, 100 * m.score);
    out << buf;
  }
  return out.str();
}

EvalReport evaluate(const std::vector<GenerationRecord>& records, const EvalModels& models) {
  if (!models.lm || !models.scorer || !models.discriminator || !models.external) {
    throw std::invalid_argument("evaluate: generator, scorer, discriminator and external classifier are required");
  }
  if (models.scorer == models.lm || &models.scorer->params() == &models.lm->params()) {
    throw std::invalid_argument("evaluate: the perplexity scorer must not be the generator");
  }
  if (models.discriminator->dataset != models.external->dataset) {
    throw std::invalid_argument("evaluate: discriminator and external classifier cover different datasets");
  }
  require_disjoint(models.discriminator->train_ids, models.external->train_ids,
                   "discriminator and external classifier training sets");

  // Group by (method, attribute) preserving first-seen order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const GenerationRecord*>> groups;
  for (const auto& r : records) {
    if (r.attribute.empty() || r.response.empty()) continue;
    auto key = std::make_pair(method_name(r.method), r.attribute);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  if (keys.empty()) throw std::invalid_argument("evaluate: no records with an attribute and a response");

  EvalReport report;
  for (const auto& key : keys) {
    const auto& group = groups[key];
    const AttributeId attr = models.discriminator->attribute(key.second);
    EvalRow row;
    row.method = key.first;
    row.attribute = key.second;
    row.count = static_cast<int>(group.size());
    std::vector<std::vector<int>> responses;
    double ppl = 0, loss = 0, secs = 0;
    long tokens = 0;
    int internal_hits = 0;
    for (const GenerationRecord* r : group) {
      responses.push_back(r->response);
      ppl += perplexity(*models.scorer, r->context, r->response);
      const Tensor feats = response_features(*models.lm, r->context, r->response);
      const auto probs = class_probs(*models.discriminator, feats);
      int best = 0;
      for (int c = 1; c < static_cast<int>(probs.size()); ++c) {
        if (probs[c] > probs[best]) best = c;
      }
      internal_hits += best == attr.class_index;
      loss -= std::log(std::max(probs[attr.class_index], 1e-300));
      for (double t : r->timings) secs += t;
      tokens += static_cast<long>(r->timings.size());
    }
    const double n = static_cast<double>(group.size());
    row.ppl = ppl / n;
    row.attribute_loss = loss / n;
    row.discrim = internal_hits / n;
    row.external = external_score(*models.external, responses, key.second);
    row.ms_per_token = tokens ? 1000 * secs / static_cast<double>(tokens) : 0.0;
    const DistinctResult d1 = distinct_n(responses, 1), d2 = distinct_n(responses, 2), d3 = distinct_n(responses, 3);
    row.dist1 = d1.ratio;
    row.dist2 = d2.ratio;
    row.dist3 = d3.ratio;
    for (const auto* d : {&d2, &d3}) {
      if (d->skipped) row.coverage += (row.coverage.empty() ? "" : "; ") + d->coverage_note();
    }
    report.rows.push_back(row);
  }

  std::vector<std::string> method_order;
  for (const auto& r : report.rows) {
    if (std::find(method_order.begin(), method_order.end(), r.method) == method_order.end()) {
      method_order.push_back(r.method);
    }
  }
  for (const auto& name : method_order) {
    MethodSummary m;
    m.method = name;
    int k = 0;
    for (const auto& r : report.rows) {
      if (r.method != name) continue;
      m.ppl += r.ppl;
      m.dist1 += r.dist1;
      m.dist2 += r.dist2;
      m.dist3 += r.dist3;
      m.discrim += r.discrim;
      m.score += r.external;
      m.ms_per_token += r.ms_per_token;
      ++k;
    }
    for (double* v : {&m.ppl, &m.dist1, &m.dist2, &m.dist3, &m.discrim, &m.score, &m.ms_per_token}) *v /= k;
    report.methods.push_back(m);
  }
  return report;
}

}  // namespace steerlm
