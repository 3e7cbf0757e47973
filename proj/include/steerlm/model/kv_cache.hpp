#pragma once

#include <vector>

#include "steerlm/autodiff/tensor.hpp"

namespace steerlm {

/// Per-layer keys and values for every cached position: H_t in the recursion
/// (o_{t+1}, H_{t+1}) = LM(x_t, H_t). Each tensor is [t, d].
struct KVCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;

  static KVCache empty(int layers, int width);
  int layers() const { return static_cast<int>(keys.size()); }
  int length() const { return keys.empty() ? 0 : keys[0].rows(); }
  /// Zero tensors with this cache's shapes.
  KVCache zeros_like() const;
  bool same_shape(const KVCache& other) const;
  /// Throws std::logic_error if layers disagree on length or width.
  void check_consistent(int width) const;
};

/// Additive overlay on a KVCache (Delta H). Same layout as the cache itself.
using KVDelta = KVCache;

}  // namespace steerlm
