#include "steerlm/model/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace steerlm {
namespace {

template <typename T>
std::vector<int> topk_impl(std::span<const T> values, int k) {
  const int v = static_cast<int>(values.size());
  if (k < 1 || k > v) {
    throw std::invalid_argument("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(v) + "]");
  }
  std::vector<int> idx(v);
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](int a, int b) { return values[a] > values[b] || (values[a] == values[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), before);
  idx.resize(k);
  return idx;
}

int draw(const std::vector<int>& idx, const std::vector<double>& weights, std::mt19937_64& rng) {
  double z = 0;
  for (double w : weights) z += w;
  if (!(z > 0) || !std::isfinite(z)) throw std::domain_error("sampling: distribution has no finite mass");
  const double u = uniform01(rng) * z;
  double acc = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    acc += weights[i];
    if (u < acc) return idx[i];
  }
  // u rounded up to z: take the last candidate with nonzero weight.
  for (std::size_t i = idx.size(); i-- > 0;) {
    if (weights[i] > 0) return idx[i];
  }
  return idx.front();
}

}  // namespace

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<int> topk_indices(std::span<const Scalar> values, int k) { return topk_impl(values, k); }

#ifdef STEERLM_FLOAT32
std::vector<int> topk_indices(std::span<const double> values, int k) { return topk_impl(values, k); }
#else
// Scalar is double: the overload above already covers it.
#endif

std::vector<double> softmax(std::span<const Scalar> logits, double temperature) {
  if (!(temperature > 0)) throw std::invalid_argument("softmax: temperature must be positive");
  std::vector<double> p(logits.size());
  double mx = -INFINITY;
  for (Scalar l : logits) mx = std::max(mx, static_cast<double>(l));
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp((logits[i] - mx) / temperature);
  for (auto& x : p) x /= z;
  return p;
}

int sample_topk(std::span<const Scalar> logits, int k, double temperature, std::mt19937_64& rng) {
  if (!(temperature > 0)) throw std::invalid_argument("sample_topk: temperature must be positive");
  const std::vector<int> idx = topk_impl(logits, k);
  const double top = logits[idx.front()];
  std::vector<double> w(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) w[i] = std::exp((logits[idx[i]] - top) / temperature);
  return draw(idx, w, rng);
}

int sample_topk_probs(std::span<const double> probs, int k, std::mt19937_64& rng) {
  const std::vector<int> idx = topk_impl(probs, k);
  std::vector<double> w(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) w[i] = probs[idx[i]];
  return draw(idx, w, rng);
}

}  // namespace steerlm
