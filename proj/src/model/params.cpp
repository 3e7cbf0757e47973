#include "steerlm/model/params.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace steerlm {

void Fnv1a::update(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state_ ^= p[i];
    state_ *= 1099511628211ull;
  }
}

std::string checksum_hex(std::uint64_t checksum) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(checksum));
  return buf;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed, Scalar init_std) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int d = cfg.width;
  // Residual projections are damped by depth so the stream starts well scaled.
  const Scalar resid_std = init_std / std::sqrt(Scalar(2 * cfg.layers));
  ModelParams p;
  p.token_embedding = Tensor::randn({cfg.vocab, d}, rng, init_std);
  p.position_embedding = Tensor::randn({cfg.window, d}, rng, init_std);
  for (int i = 0; i < cfg.layers; ++i) {
    LayerParams l;
    l.ln1_gain = Tensor({d}, Scalar(1));
    l.ln1_bias = Tensor({d});
    l.wq = Tensor::randn({d, d}, rng, init_std);
    l.bq = Tensor({d});
    l.wk = Tensor::randn({d, d}, rng, init_std);
    l.bk = Tensor({d});
    l.wv = Tensor::randn({d, d}, rng, init_std);
    l.bv = Tensor({d});
    l.wo = Tensor::randn({d, d}, rng, resid_std);
    l.bo = Tensor({d});
    l.ln2_gain = Tensor({d}, Scalar(1));
    l.ln2_bias = Tensor({d});
    l.w1 = Tensor::randn({d, cfg.ffn}, rng, init_std);
    l.b1 = Tensor({cfg.ffn});
    l.w2 = Tensor::randn({cfg.ffn, d}, rng, resid_std);
    l.b2 = Tensor({d});
    p.layers.push_back(std::move(l));
  }
  p.final_gain = Tensor({d}, Scalar(1));
  p.final_bias = Tensor({d});
  p.output_weight = Tensor::randn({d, cfg.vocab}, rng, init_std);
  if (cfg.output_bias) p.output_bias = Tensor({cfg.vocab});
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::uint64_t ModelParams::checksum() const {
  Fnv1a h;
  visit([&](const std::string& name, const Tensor& t) {
    h.update(name);
    h.update(t);
  });
  return h.digest();
}

}  // namespace steerlm
