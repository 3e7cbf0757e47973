#pragma once

#include <functional>

#include "steerlm/autodiff/graph.hpp"

namespace steerlm::ad {

using ScalarFn = std::function<Var(Graph&, Var)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the reverse-mode gradient of `f` at `x` with central differences.
/// Per coordinate: |analytic - numeric| / (|analytic| + |numeric| + eps).
FdReport fd_check_report(const ScalarFn& f, const Tensor& x, double h, double eps = 1e-12);

inline double fd_check(const ScalarFn& f, const Tensor& x, double h, double eps = 1e-12) {
  return fd_check_report(f, x, h, eps).max_rel_error;
}

}  // namespace steerlm::ad
