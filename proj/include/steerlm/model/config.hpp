#pragma once

#include <json.hpp>
#include <string>

namespace steerlm {

struct ModelConfig {
  int layers = 4;
  int width = 128;
  int heads = 4;
  int ffn = 512;
  int vocab = 2000;
  int window = 128;
  bool output_bias = false;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
  int head_dim() const { return width / heads; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace steerlm
