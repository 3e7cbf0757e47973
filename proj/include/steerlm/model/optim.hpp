#pragma once

#include <json.hpp>
#include <vector>

#include "steerlm/autodiff/tensor.hpp"

namespace steerlm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 1.0;

  nlohmann::json to_json() const;
  static AdamConfig from_json(const nlohmann::json& j);
};

/// Adam over a fixed list of tensors owned by the caller.
class Adam {
 public:
  Adam(AdamConfig cfg, std::vector<Tensor*> params);

  /// grads[i] matches params[i]. Returns the pre-clip global gradient norm.
  double step(const std::vector<Tensor>& grads);
  int steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  int t_ = 0;
};

}  // namespace steerlm
