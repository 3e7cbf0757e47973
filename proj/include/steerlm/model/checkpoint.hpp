#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "steerlm/autodiff/tensor.hpp"
#include "steerlm/model/adapter_stack.hpp"
#include "steerlm/model/config.hpp"
#include "steerlm/model/params.hpp"

namespace steerlm {

// Named-tensor container, little-endian throughout:
//   "STEERLM\0" | u32 version | u64 meta_len | meta JSON (UTF-8)
//   | u32 count | count x { u32 name_len | name | u8 dtype (1=f64, 2=f32)
//                          | u32 rank | u64 dims[rank] | raw data }

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

// Typed wrappers. `meta.kind` distinguishes the artifacts.

void save_model(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                const nlohmann::json& extra = nlohmann::json::object());
struct LoadedModel {
  ModelConfig config;
  ModelParams params;
  nlohmann::json meta;
};
LoadedModel load_model(const std::string& path);

void save_adapters(const std::string& path, const ModelConfig& cfg, const AdapterStack& stack);
AdapterStack load_adapters(const std::string& path, const ModelConfig& cfg);

}  // namespace steerlm
