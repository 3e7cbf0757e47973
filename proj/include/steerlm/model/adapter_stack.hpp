#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "steerlm/autodiff/tensor.hpp"
#include "steerlm/model/config.hpp"

namespace steerlm {

struct AdapterConfig {
  int bottleneck = 8;
  /// Transformer layers that get an adapter; empty means all of them.
  std::vector<int> layers;
  Scalar init_scale = Scalar(0.02);

  nlohmann::json to_json() const;
  static AdapterConfig from_json(const nlohmann::json& j);
};

/// Adapter(o) = ReLU(LN(o) W_enc + b_enc) W_dec + b_dec + o, applied to the
/// output of transformer layer `layer`.
struct AdapterLayer {
  int layer = 0;
  Tensor ln_gain, ln_bias;  // [d]
  Tensor w_enc, b_enc;      // [d,m], [m]
  Tensor w_dec, b_dec;      // [m,d], [d]
};

/// Residual adapters steering a frozen LM toward one attribute.
struct AdapterStack {
  std::string attribute;
  AdapterConfig config;
  std::vector<AdapterLayer> layers;
  nlohmann::json source = nlohmann::json::object();  // e.g. the PPLM config used to distill

  /// W_dec and b_dec start at zero, so a fresh stack is an identity map.
  static AdapterStack init(const ModelConfig& model, const AdapterConfig& cfg, std::uint64_t seed);

  const AdapterLayer* at_layer(int layer) const;
  std::size_t parameter_count() const;
  /// Closed form: attached_layers * (2dm + m + d + 2d).
  static std::size_t expected_count(const ModelConfig& model, const AdapterConfig& cfg);
  std::uint64_t checksum() const;

  template <typename Fn>
  void visit(Fn&& fn) {
    visit_impl(*this, fn);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    visit_impl(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& self, Fn& fn) {
    for (auto& l : self.layers) {
      const std::string p = "adapter" + std::to_string(l.layer) + ".";
      fn(p + "ln.gain", l.ln_gain);
      fn(p + "ln.bias", l.ln_bias);
      fn(p + "enc.weight", l.w_enc);
      fn(p + "enc.bias", l.b_enc);
      fn(p + "dec.weight", l.w_dec);
      fn(p + "dec.bias", l.b_dec);
    }
  }
};

}  // namespace steerlm
