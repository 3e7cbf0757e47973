#include "steerlm/model/adapter_stack.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "steerlm/model/params.hpp"

namespace steerlm {

nlohmann::json AdapterConfig::to_json() const {
  return {{"bottleneck", bottleneck}, {"layers", layers}, {"init_scale", init_scale}};
}

AdapterConfig AdapterConfig::from_json(const nlohmann::json& j) {
  AdapterConfig c;
  c.bottleneck = j.at("bottleneck").get<int>();
  c.layers = j.value("layers", std::vector<int>{});
  c.init_scale = j.value("init_scale", Scalar(0.02));
  return c;
}

namespace {

std::vector<int> attached_layers(const ModelConfig& model, const AdapterConfig& cfg) {
  std::vector<int> layers = cfg.layers;
  if (layers.empty()) {
    for (int i = 0; i < model.layers; ++i) layers.push_back(i);
  }
  std::sort(layers.begin(), layers.end());
  if (std::adjacent_find(layers.begin(), layers.end()) != layers.end()) {
    throw std::invalid_argument("AdapterConfig: duplicate attach layer");
  }
  for (int l : layers) {
    if (l < 0 || l >= model.layers) throw std::invalid_argument("AdapterConfig: attach layer out of range");
  }
  return layers;
}

}  // namespace

AdapterStack AdapterStack::init(const ModelConfig& model, const AdapterConfig& cfg, std::uint64_t seed) {
  const int d = model.width, m = cfg.bottleneck;
  if (m <= 0 || m >= d) throw std::invalid_argument("AdapterConfig: bottleneck must satisfy 0 < m < d");
  std::mt19937_64 rng(seed);
  AdapterStack s;
  s.config = cfg;
  for (int layer : attached_layers(model, cfg)) {
    AdapterLayer a;
    a.layer = layer;
    a.ln_gain = Tensor({d}, Scalar(1));
    a.ln_bias = Tensor({d});
    a.w_enc = Tensor::randn({d, m}, rng, cfg.init_scale);
    a.b_enc = Tensor({m});
    a.w_dec = Tensor({m, d});
    a.b_dec = Tensor({d});
    s.layers.push_back(std::move(a));
  }
  return s;
}

const AdapterLayer* AdapterStack::at_layer(int layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return &l;
  }
  return nullptr;
}

std::size_t AdapterStack::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::size_t AdapterStack::expected_count(const ModelConfig& model, const AdapterConfig& cfg) {
  const std::size_t d = model.width, m = cfg.bottleneck;
  return attached_layers(model, cfg).size() * (2 * d * m + m + d + 2 * d);
}

std::uint64_t AdapterStack::checksum() const {
  Fnv1a h;
  h.update(attribute);
  visit([&](const std::string& name, const Tensor& t) {
    h.update(name);
    h.update(t);
  });
  return h.digest();
}

}  // namespace steerlm
