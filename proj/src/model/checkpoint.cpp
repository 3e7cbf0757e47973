#include "steerlm/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace steerlm {
namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'T', 'E', 'E', 'R', 'L', 'M', '\0'};
constexpr std::uint8_t kDtype = sizeof(Scalar) == 8 ? 1 : 2;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error(path + ": truncated container");
  return v;
}

std::string take_bytes(std::istream& in, std::size_t n, const std::string& path) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error(path + ": truncated container");
  return s;
}

}  // namespace

const Tensor& Container::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw std::out_of_range("container has no tensor named '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_container(const std::string& path, const Container& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kContainerVersion);
  const std::string meta = c.meta.dump();
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& nt : c.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put<std::uint8_t>(out, kDtype);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (int d : nt.tensor.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(nt.tensor.data()),
              static_cast<std::streamsize>(nt.tensor.size() * sizeof(Scalar)));
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  if (take_bytes(in, sizeof(kMagic), path) != std::string(kMagic, sizeof(kMagic))) {
    throw std::runtime_error(path + ": not a steerlm container");
  }
  const auto version = take<std::uint32_t>(in, path);
  if (version != kContainerVersion) throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
  Container c;
  c.meta = nlohmann::json::parse(take_bytes(in, take<std::uint64_t>(in, path), path));
  const auto count = take<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = take_bytes(in, take<std::uint32_t>(in, path), path);
    const auto dtype = take<std::uint8_t>(in, path);
    const auto rank = take<std::uint32_t>(in, path);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(take<std::uint64_t>(in, path)));
    const std::size_t n = shape_numel(shape);
    Tensor t(shape);
    if (dtype == kDtype) {
      if (n && !in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(n * sizeof(Scalar)))) {
        throw std::runtime_error(path + ": truncated tensor " + nt.name);
      }
    } else if (dtype == 1 || dtype == 2) {
      // Cross-precision load: convert element by element.
      for (std::size_t j = 0; j < n; ++j) {
        t[j] = dtype == 1 ? static_cast<Scalar>(take<double>(in, path)) : static_cast<Scalar>(take<float>(in, path));
      }
    } else {
      throw std::runtime_error(path + ": unknown dtype for tensor " + nt.name);
    }
    nt.tensor = std::move(t);
    c.tensors.push_back(std::move(nt));
  }
  return c;
}

void save_model(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                const nlohmann::json& extra) {
  Container c;
  c.meta = extra.is_object() ? extra : nlohmann::json::object();
  c.meta["kind"] = "lm";
  c.meta["config"] = cfg.to_json();
  c.meta["checksum"] = checksum_hex(params.checksum());
  params.visit([&](const std::string& name, const Tensor& t) { c.tensors.push_back({name, t}); });
  write_container(path, c);
}

LoadedModel load_model(const std::string& path) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "lm") throw std::runtime_error(path + ": not a language model checkpoint");
  LoadedModel m;
  m.config = ModelConfig::from_json(c.meta.at("config"));
  m.params = ModelParams::init(m.config, 0);
  if (!m.config.output_bias) m.params.output_bias = Tensor();
  m.params.visit([&](const std::string& name, Tensor& t) {
    const Tensor& src = c.get(name);
    if (src.shape() != t.shape()) {
      throw ShapeError(path + ": tensor " + name + " has shape " + shape_str(src.shape()) + ", expected " +
                       shape_str(t.shape()));
    }
    t = src;
  });
  m.meta = std::move(c.meta);
  return m;
}

void save_adapters(const std::string& path, const ModelConfig& cfg, const AdapterStack& stack) {
  Container c;
  c.meta["kind"] = "adapters";
  c.meta["attribute"] = stack.attribute;
  c.meta["adapter_config"] = stack.config.to_json();
  c.meta["model_config"] = cfg.to_json();
  c.meta["source"] = stack.source;
  c.meta["checksum"] = checksum_hex(stack.checksum());
  stack.visit([&](const std::string& name, const Tensor& t) { c.tensors.push_back({name, t}); });
  write_container(path, c);
}

AdapterStack load_adapters(const std::string& path, const ModelConfig& cfg) {
  Container c = read_container(path);
  if (c.meta.value("kind", "") != "adapters") throw std::runtime_error(path + ": not an adapter checkpoint");
  if (ModelConfig::from_json(c.meta.at("model_config")) != cfg) {
    throw std::runtime_error(path + ": adapters were trained for a different model config");
  }
  AdapterStack s = AdapterStack::init(cfg, AdapterConfig::from_json(c.meta.at("adapter_config")), 0);
  s.attribute = c.meta.at("attribute").get<std::string>();
  s.source = c.meta.value("source", nlohmann::json::object());
  s.visit([&](const std::string& name, Tensor& t) {
    const Tensor& src = c.get(name);
    if (src.shape() != t.shape()) throw ShapeError(path + ": tensor " + name + " has the wrong shape");
    t = src;
  });
  return s;
}

}  // namespace steerlm
