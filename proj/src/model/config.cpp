#include "steerlm/model/config.hpp"

#include <stdexcept>

namespace steerlm {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (layers < 1) fail("layers must be >= 1");
  if (width < 1) fail("width must be >= 1");
  if (heads < 1 || width % heads != 0) fail("width must be divisible by heads");
  if (ffn < 1) fail("ffn must be >= 1");
  if (vocab < 1) fail("vocab must be >= 1");
  if (window < 2) fail("window must be >= 2");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"layers", layers}, {"width", width},   {"heads", heads},
          {"ffn", ffn},       {"vocab", vocab},   {"window", window},
          {"output_bias", output_bias}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.width = j.at("width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn = j.at("ffn").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.window = j.at("window").get<int>();
  c.output_bias = j.value("output_bias", false);
  c.validate();
  return c;
}

}  // namespace steerlm
