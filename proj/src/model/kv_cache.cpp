#include "steerlm/model/kv_cache.hpp"

#include <stdexcept>

namespace steerlm {

KVCache KVCache::empty(int layers, int width) {
  KVCache c;
  c.keys.assign(layers, Tensor({0, width}));
  c.values.assign(layers, Tensor({0, width}));
  return c;
}

KVCache KVCache::zeros_like() const {
  KVCache c;
  for (const auto& k : keys) c.keys.emplace_back(k.shape());
  for (const auto& v : values) c.values.emplace_back(v.shape());
  return c;
}

bool KVCache::same_shape(const KVCache& other) const {
  if (keys.size() != other.keys.size() || values.size() != other.values.size()) return false;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].shape() != other.keys[i].shape() || values[i].shape() != other.values[i].shape()) return false;
  }
  return true;
}

void KVCache::check_consistent(int width) const {
  if (keys.size() != values.size()) throw std::logic_error("KVCache: key/value layer counts differ");
  const int t = length();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (const Tensor* x : {&keys[i], &values[i]}) {
      if (x->rank() != 2 || x->dim(0) != t || x->dim(1) != width) {
        throw std::logic_error("KVCache: layer " + std::to_string(i) + " has shape " + shape_str(x->shape()) +
                               ", expected [" + std::to_string(t) + "," + std::to_string(width) + "]");
      }
    }
  }
}

}  // namespace steerlm
