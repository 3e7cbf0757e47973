#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerlm/autodiff/tensor.hpp"
#include "steerlm/model/config.hpp"

namespace steerlm {

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;

  template <typename Self, typename Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "ln1.gain", self.ln1_gain);
    fn(prefix + "ln1.bias", self.ln1_bias);
    fn(prefix + "attn.wq", self.wq);
    fn(prefix + "attn.bq", self.bq);
    fn(prefix + "attn.wk", self.wk);
    fn(prefix + "attn.bk", self.bk);
    fn(prefix + "attn.wv", self.wv);
    fn(prefix + "attn.bv", self.bv);
    fn(prefix + "attn.wo", self.wo);
    fn(prefix + "attn.bo", self.bo);
    fn(prefix + "ln2.gain", self.ln2_gain);
    fn(prefix + "ln2.bias", self.ln2_bias);
    fn(prefix + "ffn.w1", self.w1);
    fn(prefix + "ffn.b1", self.b1);
    fn(prefix + "ffn.w2", self.w2);
    fn(prefix + "ffn.b2", self.b2);
  }
};

/// Weights of the pre-norm causal transformer. `frozen` marks a base model that
/// training routines must not touch.
struct ModelParams {
  Tensor token_embedding;     // [V,d]
  Tensor position_embedding;  // [window,d]
  std::vector<LayerParams> layers;
  Tensor final_gain, final_bias;
  Tensor output_weight;  // [d,V]
  Tensor output_bias;    // [V], empty unless configured
  bool frozen = false;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed, Scalar init_std = Scalar(0.02));

  /// Visits every tensor with a stable name, in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn) {
    visit_impl(*this, fn);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    visit_impl(*this, fn);
  }

  std::size_t parameter_count() const;
  /// FNV-1a over names and raw bytes of every tensor.
  std::uint64_t checksum() const;

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& self, Fn& fn) {
    fn(std::string("embed.token"), self.token_embedding);
    fn(std::string("embed.position"), self.position_embedding);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      LayerParams::visit(self.layers[i], "layer" + std::to_string(i) + ".", fn);
    }
    fn(std::string("final.gain"), self.final_gain);
    fn(std::string("final.bias"), self.final_bias);
    fn(std::string("output.weight"), self.output_weight);
    if (!self.output_bias.empty()) fn(std::string("output.bias"), self.output_bias);
  }
};

/// Incremental FNV-1a hasher shared by every checksum in the project.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update(const std::string& s) { update(s.data(), s.size()); }
  void update(const Tensor& t) { update(t.data(), t.size() * sizeof(Scalar)); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 1469598103934665603ull;
};

std::string checksum_hex(std::uint64_t checksum);

}  // namespace steerlm
