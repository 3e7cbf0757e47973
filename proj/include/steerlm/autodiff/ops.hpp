#pragma once

#include <functional>
#include <span>
#include <vector>

#include "steerlm/autodiff/graph.hpp"

namespace steerlm::ad {

// All ops take their graph from the first operand. Shapes must conform exactly;
// the only implicit broadcast is scalar-with-tensor (scale / add_scalar) and the
// bias row of linear / layer_norm.

Var matmul(Var a, Var b);                   // [n,k] x [k,m] -> [n,m]
Var linear(Var x, Var weight, Var bias);    // [n,k] x [k,m] + [m] -> [n,m]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                      // elementwise
Var scale(Var a, Scalar s);
Var add_scalar(Var a, Scalar s);
Var concat(std::span<const Var> parts, int axis);
Var slice(Var a, int axis, int begin, int end);
Var reshape(Var a, Shape shape);
Var embedding(Var table, std::span<const int> ids);   // [V,d] -> [len(ids),d]
Var softmax(Var a, int axis = -1);
Var log_softmax(Var a, int axis = -1);
Var relu(Var a);
Var layer_norm(Var x, Var gain, Var bias, Scalar eps = Scalar(1e-5));
Var mean(Var a, int axis);                  // removes `axis`
Var sum(Var a);                             // -> [1]
Var pick(Var a, int flat_index);            // -> [1]
/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
/// Labels equal to `ignore_label` contribute nothing.
Var cross_entropy(Var logits, std::span<const int> labels, int ignore_label = -1);
/// KL(p || q) = sum p (log p - log q) over all entries of two distributions.
Var kl_divergence(Var p, Var q);
Var l2_norm(Var a);                         // -> [1]
/// Multi-head scaled dot-product attention with a causal mask. q holds the last
/// T positions of an S-long sequence, so query i may see keys [0, S-T+i].
Var causal_attention(Var q, Var k, Var v, int heads);

/// Escape hatch for user-defined ops; `backward(x, upstream)` returns dL/dx.
Var custom_unary(Var x, std::function<Tensor(const Tensor&)> forward,
                 std::function<Tensor(const Tensor&, const Tensor&)> backward);

}  // namespace steerlm::ad
