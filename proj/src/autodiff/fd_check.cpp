#include "steerlm/autodiff/fd_check.hpp"

#include <cmath>
#include <stdexcept>

namespace steerlm::ad {
namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Graph g;
  Var out = f(g, g.constant(x));
  if (out.value().size() != 1) throw ShapeError("fd_check: function must return a scalar");
  return static_cast<double>(out.value()[0]);
}

}  // namespace

FdReport fd_check_report(const ScalarFn& f, const Tensor& x, double h, double eps) {
  if (!(h > 0)) throw std::invalid_argument("fd_check: step must be positive");
  Tensor analytic;
  {
    Graph g;
    Var xv = g.leaf(x, true);
    Var out = f(g, xv);
    g.backward(out);
    analytic = g.has_grad(xv) ? g.grad(xv) : Tensor(x.shape());
  }
  FdReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Scalar orig = probe[i];
    probe[i] = orig + static_cast<Scalar>(h);
    const double up = evaluate(f, probe);
    probe[i] = orig - static_cast<Scalar>(h);
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = static_cast<double>(analytic[i]);
    const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + eps);
    if (err > report.max_rel_error || i == 0) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      if (err >= report.max_rel_error) {
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace steerlm::ad
