#include "steerlm/eval/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#ifdef __linux__
#include <sched.h>
#endif

#include "steerlm/eval/metrics.hpp"

namespace steerlm {

const SweepCell& SweepResult::cell(double alpha, int p) const {
  for (const auto& c : cells) {
    if (c.alpha == alpha && c.p == p) return c;
  }
  throw std::out_of_range("sweep has no cell alpha=" + std::to_string(alpha) + " p=" + std::to_string(p));
}

std::string SweepResult::csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "# normalisation: min-max per component over all grid rows, sum = ppl_component + clf_component; "
         "ppl_component from mean log perplexity, clf_component from mean external classifier loss\n";
  out << "# baseline (unsteered): ppl_component=" << baseline.ppl_component
      << " clf_component=" << baseline.clf_component << " sum=" << baseline.sum << "\n";
  out << "alpha,p,seed,ppl_component,clf_component,sum\n";
  for (const auto& r : rows) {
    out << r.alpha << ',' << r.p << ',' << r.seed << ',';
    if (r.missing) {
      out << "missing,missing,missing\n";
    } else {
      out << r.ppl_component << ',' << r.clf_component << ',' << r.sum << '\n';
    }
  }
  for (const auto& c : cells) {
    out << c.alpha << ',' << c.p << ",mean,";
    if (c.seeds == 0) {
      out << "missing,missing,missing\n";
    } else {
      out << c.ppl_component << ',' << c.clf_component << ',' << c.sum << '\n';
    }
  }
  return out.str();
}

namespace {

struct Raw {
  double log_ppl = 0, clf_loss = 0;
};

Raw run_cell(const SteeringModels& models, const std::vector<std::vector<std::string>>& prefixes, Method method,
             const PPLMConfig& pplm, const GenConfig& gen, std::uint64_t seed, const std::string& attribute,
             const TransformerLM& scorer, const BowClassifier& external) {
  std::vector<std::vector<int>> responses;
  double log_ppl = 0;
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    GenerationRequest req;
    req.method = method;
    req.history = prefixes[i];
    req.attribute = attribute;
    req.gen = gen;
    req.gen.seed = seed * 1000003ull + i;
    req.pplm = pplm;
    const GenerationRecord rec = generate(models, req);
    log_ppl += std::log(perplexity(scorer, rec.context, rec.response));
    responses.push_back(rec.response);
  }
  return {log_ppl / static_cast<double>(prefixes.size()), external_loss(external, responses, attribute)};
}

}  // namespace

SweepResult sweep_grid(const SteeringModels& models, const std::vector<std::vector<std::string>>& prefixes,
                       const SweepConfig& cfg, const TransformerLM& scorer, const BowClassifier& external,
                       const SweepProgress& progress) {
  if (cfg.alphas.empty() || cfg.iterations.empty() || cfg.seeds.empty()) {
    throw std::invalid_argument("sweep: alpha, p and seed lists must be non-empty");
  }
  if (prefixes.empty()) throw std::invalid_argument("sweep: no prefixes");
  SweepResult res;
  const int total = static_cast<int>(cfg.alphas.size() * cfg.iterations.size() * cfg.seeds.size() + cfg.seeds.size());
  int done = 0;
  for (double alpha : cfg.alphas) {
    for (int p : cfg.iterations) {
      for (std::uint64_t seed : cfg.seeds) {
        SweepRow row;
        row.alpha = alpha;
        row.p = p;
        row.seed = seed;
        try {
          PPLMConfig pc = cfg.pplm;
          pc.alpha = alpha;
          pc.iterations = p;
          const Raw raw = run_cell(models, prefixes, Method::kPP, pc, cfg.gen, seed, cfg.attribute, scorer, external);
          row.log_ppl = raw.log_ppl;
          row.clf_loss = raw.clf_loss;
        } catch (const std::exception& e) {
          row.missing = true;
          row.error = e.what();
        }
        res.rows.push_back(row);
        if (progress) progress(++done, total);
      }
    }
  }
  // Unsteered reference on the same prefixes and seeds.
  double base_ppl = 0, base_clf = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const Raw raw = run_cell(models, prefixes, Method::kDG, cfg.pplm, cfg.gen, seed, cfg.attribute, scorer, external);
    base_ppl += raw.log_ppl;
    base_clf += raw.clf_loss;
    if (progress) progress(++done, total);
  }
  res.baseline.log_ppl = base_ppl / static_cast<double>(cfg.seeds.size());
  res.baseline.clf_loss = base_clf / static_cast<double>(cfg.seeds.size());

  double lo_p = std::numeric_limits<double>::infinity(), hi_p = -lo_p, lo_c = lo_p, hi_c = -lo_p;
  for (const auto& r : res.rows) {
    if (r.missing) continue;
    lo_p = std::min(lo_p, r.log_ppl);
    hi_p = std::max(hi_p, r.log_ppl);
    lo_c = std::min(lo_c, r.clf_loss);
    hi_c = std::max(hi_c, r.clf_loss);
  }
  auto norm = [](double x, double lo, double hi) { return hi > lo ? (x - lo) / (hi - lo) : 0.0; };
  auto normalise = [&](SweepRow& r) {
    r.ppl_component = norm(r.log_ppl, lo_p, hi_p);
    r.clf_component = norm(r.clf_loss, lo_c, hi_c);
    r.sum = r.ppl_component + r.clf_component;
  };
  for (auto& r : res.rows) {
    if (!r.missing) normalise(r);
  }
  normalise(res.baseline);

  for (double alpha : cfg.alphas) {
    for (int p : cfg.iterations) {
      SweepCell c;
      c.alpha = alpha;
      c.p = p;
      for (const auto& r : res.rows) {
        if (r.alpha != alpha || r.p != p || r.missing) continue;
        c.ppl_component += r.ppl_component;
        c.clf_component += r.clf_component;
        c.sum += r.sum;
        ++c.seeds;
      }
      if (c.seeds) {
        c.ppl_component /= c.seeds;
        c.clf_component /= c.seeds;
        c.sum /= c.seeds;
      }
      res.cells.push_back(c);
    }
  }
  return res;
}

bool pin_to_one_cpu() {
#ifdef __linux__
  cpu_set_t current;
  CPU_ZERO(&current);
  if (sched_getaffinity(0, sizeof(current), &current) != 0) return false;
  for (int cpu = 0; cpu < CPU_SETSIZE; ++cpu) {
    if (!CPU_ISSET(cpu, &current)) continue;
    cpu_set_t one;
    CPU_ZERO(&one);
    CPU_SET(cpu, &one);
    return sched_setaffinity(0, sizeof(one), &one) == 0;
  }
  return false;
#else
  return false;
#endif
}

std::vector<BenchStats> latency_bench(const SteeringModels& models, const std::vector<BenchMethod>& methods,
                                      const std::vector<std::vector<std::string>>& prefixes, const BenchConfig& cfg) {
  if (prefixes.empty()) throw std::invalid_argument("bench: no prefixes");
  if (cfg.tokens < 1 || cfg.reps < 1 || cfg.warmup < 0) throw std::invalid_argument("bench: bad tokens/reps/warmup");
  std::vector<BenchStats> out;
  for (const auto& m : methods) {
    SteeringModels sm = models;
    if (m.adapters) sm.adapters = m.adapters;
    std::vector<double> times;
    BenchStats st;
    st.label = m.label;
    auto once = [&](std::size_t i, int rep, bool measure) {
      GenerationRequest req = m.request;
      req.history = prefixes[i % prefixes.size()];
      req.gen.max_length = cfg.tokens;
      req.gen.min_length = cfg.tokens;
      req.gen.candidates = 1;
      req.gen.seed = cfg.seed + static_cast<std::uint64_t>(rep) * 100003ull + i;
      const GenerationRecord rec = generate(sm, req);
      if (!measure) return;
      times.insert(times.end(), rec.timings.begin(), rec.timings.end());
      ++st.runs;
    };
    for (int w = 0; w < cfg.warmup; ++w) once(static_cast<std::size_t>(w), -1 - w, false);
    for (int rep = 0; rep < cfg.reps; ++rep) {
      for (std::size_t i = 0; i < prefixes.size(); ++i) once(i, rep, true);
    }
    if (times.empty()) throw std::logic_error("bench: no tokens measured for " + m.label);
    st.tokens = static_cast<long>(times.size());
    double sum = 0;
    for (double t : times) sum += t;
    st.mean = sum / static_cast<double>(times.size());
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    st.median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
    // Nearest-rank percentile.
    st.p95 = times[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1];
    out.push_back(st);
  }
  return out;
}

std::string bench_table(const std::vector<BenchStats>& stats) {
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-12s %12s %12s %12s %8s %6s\n", "method", "mean ms/tok", "median", "p95",
                "tokens", "runs");
  out << buf;
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof(buf), "%-12s %12.4f %12.4f %12.4f %8ld %6d\n", s.label.c_str(), 1000 * s.mean,
                  1000 * s.median, 1000 * s.p95, s.tokens, s.runs);
    out << buf;
  }
  return out.str();
}

}  // namespace steerlm
