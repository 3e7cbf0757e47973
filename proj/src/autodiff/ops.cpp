#include "steerlm/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace steerlm::ad {
namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using VecMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

ConstMatMap cmat(const Tensor& t, int rows, int cols) { return ConstMatMap(t.data(), rows, cols); }
MatMap mmat(Tensor& t, int rows, int cols) { return MatMap(t.data(), rows, cols); }
ConstVecMap cvec(const Tensor& t) { return ConstVecMap(t.data(), static_cast<Eigen::Index>(t.size())); }
VecMap mvec(Tensor& t) { return VecMap(t.data(), static_cast<Eigen::Index>(t.size())); }

Graph& graph_of(Var v) {
  if (!v.valid()) throw std::invalid_argument("op received an invalid Var");
  return *v.graph;
}

void same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw std::invalid_argument("operands belong to different graphs");
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

int norm_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis out of range for rank " + std::to_string(rank));
  }
  return axis;
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

int bias_width(const Shape& s) {
  if (s.size() == 1) return s[0];
  if (s.size() == 2 && s[0] == 1) return s[1];
  return -1;
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_fail("matmul", av.shape(), bv.shape());
  const int n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor out({n, m});
  mmat(out, n, m).noalias() = cmat(av, n, k) * cmat(bv, k, m);
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, n, k, m](Graph& g, int self) {
    auto go = cmat(g.grad_of(self), n, m);
    if (g.needs_grad(ia)) mmat(g.grad_buffer(ia), n, k).noalias() += go * cmat(g.value(ib), k, m).transpose();
    if (g.needs_grad(ib)) mmat(g.grad_buffer(ib), k, m).noalias() += cmat(g.value(ia), n, k).transpose() * go;
  });
}

Var linear(Var x, Var weight, Var bias) {
  Graph& g = graph_of(x);
  same_graph(x, weight);
  same_graph(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0)) shape_fail("linear", xv.shape(), wv.shape());
  const int n = xv.dim(0), k = xv.dim(1), m = wv.dim(1);
  if (bias_width(bv.shape()) != m) shape_fail("linear(bias)", wv.shape(), bv.shape());
  Tensor out({n, m});
  auto om = mmat(out, n, m);
  om.noalias() = cmat(xv, n, k) * cmat(wv, k, m);
  om.rowwise() += cmat(bv, 1, m).row(0);
  const int ix = x.id, iw = weight.id, ib = bias.id;
  return g.record(std::move(out), {ix, iw, ib}, [ix, iw, ib, n, k, m](Graph& g, int self) {
    auto go = cmat(g.grad_of(self), n, m);
    if (g.needs_grad(ix)) mmat(g.grad_buffer(ix), n, k).noalias() += go * cmat(g.value(iw), k, m).transpose();
    if (g.needs_grad(iw)) mmat(g.grad_buffer(iw), k, m).noalias() += cmat(g.value(ix), n, k).transpose() * go;
    if (g.needs_grad(ib)) mmat(g.grad_buffer(ib), 1, m) += go.colwise().sum();
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  same_graph(a, b);
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  Tensor out = a.value();
  mvec(out) += cvec(b.value());
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const auto go = cvec(g.grad_of(self));
    if (g.needs_grad(ia)) mvec(g.grad_buffer(ia)) += go;
    if (g.needs_grad(ib)) mvec(g.grad_buffer(ib)) += go;
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a);
  same_graph(a, b);
  if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
  Tensor out = a.value();
  mvec(out) -= cvec(b.value());
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const auto go = cvec(g.grad_of(self));
    if (g.needs_grad(ia)) mvec(g.grad_buffer(ia)) += go;
    if (g.needs_grad(ib)) mvec(g.grad_buffer(ib)) -= go;
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a);
  same_graph(a, b);
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  Tensor out = a.value();
  mvec(out) *= cvec(b.value());
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const auto go = cvec(g.grad_of(self));
    if (g.needs_grad(ia)) mvec(g.grad_buffer(ia)) += go * cvec(g.value(ib));
    if (g.needs_grad(ib)) mvec(g.grad_buffer(ib)) += go * cvec(g.value(ia));
  });
}

Var scale(Var a, Scalar s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  mvec(out) *= s;
  const int ia = a.id;
  return g.record(std::move(out), {ia}, [ia, s](Graph& g, int self) {
    mvec(g.grad_buffer(ia)) += s * cvec(g.grad_of(self));
  });
}

Var add_scalar(Var a, Scalar s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  mvec(out) += s;
  const int ia = a.id;
  return g.record(std::move(out), {ia}, [ia](Graph& g, int self) {
    mvec(g.grad_buffer(ia)) += cvec(g.grad_of(self));
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Graph& g = graph_of(parts[0]);
  const Shape& s0 = parts[0].shape();
  axis = norm_axis(axis, static_cast<int>(s0.size()), "concat");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<int> ids;
  std::vector<int> lens;
  for (const Var& p : parts) {
    same_graph(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != s0.size()) shape_fail("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != s0[i]) shape_fail("concat", s0, s);
    }
    out_shape[axis] += s[axis];
    ids.push_back(p.id);
    lens.push_back(s[axis]);
  }
  const AxisSplit sp = split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& pv = parts[pi].value();
    const std::size_t chunk = static_cast<std::size_t>(lens[pi]) * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * sp.len * sp.inner + offset);
    }
    offset += chunk;
  }
  return g.record(std::move(out), ids, [ids, lens, sp](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
      const std::size_t chunk = static_cast<std::size_t>(lens[pi]) * sp.inner;
      if (g.needs_grad(ids[pi])) {
        Tensor& gb = g.grad_buffer(ids[pi]);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const Scalar* src = go.data() + o * sp.len * sp.inner + offset;
          Scalar* dst = gb.data() + o * chunk;
          for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
        }
      }
      offset += chunk;
    }
  });
}

Var slice(Var a, int axis, int begin, int end) {
  Graph& g = graph_of(a);
  const Shape& s = a.shape();
  axis = norm_axis(axis, static_cast<int>(s.size()), "slice");
  if (begin < 0 || end > s[axis] || begin >= end) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const AxisSplit sp = split_axis(s, axis);
  const std::size_t chunk = static_cast<std::size_t>(end - begin) * sp.inner;
  const std::size_t skip = static_cast<std::size_t>(begin) * sp.inner;
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(av.data() + o * sp.len * sp.inner + skip, chunk, out.data() + o * chunk);
  }
  const int ia = a.id;
  return g.record(std::move(out), {ia}, [ia, sp, chunk, skip](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    Tensor& gb = g.grad_buffer(ia);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      Scalar* dst = gb.data() + o * sp.len * sp.inner + skip;
      const Scalar* src = go.data() + o * chunk;
      for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  const int ia = a.id;
  return g.record(std::move(out), {ia}, [ia](Graph& g, int self) {
    mvec(g.grad_buffer(ia)) += cvec(g.grad_of(self));
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = graph_of(table);
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_str(tv.shape()));
  const int vocab = tv.dim(0), d = tv.dim(1);
  const int n = static_cast<int>(ids.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                              std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + static_cast<std::size_t>(i) * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const int it = table.id;
  return g.record(std::move(out), {it}, [it, idv, d](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    Tensor& gb = g.grad_buffer(it);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      Scalar* dst = gb.data() + static_cast<std::size_t>(idv[i]) * d;
      const Scalar* src = go.data() + i * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

namespace {

// Applies `fn(ptr, stride, len)` to every 1-D fiber along `axis`.
template <typename Fn>
void for_each_fiber(const Shape& s, int axis, Fn&& fn) {
  const AxisSplit sp = split_axis(s, axis);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      fn(o * sp.len * sp.inner + in, sp.inner, sp.len);
    }
  }
}

}  // namespace

Var softmax(Var a, int axis) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  axis = norm_axis(axis, av.rank(), "softmax");
  Tensor out(av.shape());
  for_each_fiber(av.shape(), axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
    Scalar mx = av[base];
    for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, av[base + j * stride]);
    Scalar total = 0;
    for (std::size_t j = 0; j < len; ++j) {
      const Scalar e = std::exp(av[base + j * stride] - mx);
      out[base + j * stride] = e;
      total += e;
    }
    for (std::size_t j = 0; j < len; ++j) out[base + j * stride] /= total;
  });
  const int ia = a.id;
  const Shape shape = av.shape();
  return g.record(std::move(out), {ia}, [ia, axis, shape](Graph& g, int self) {
    const Tensor& y = g.value(self);
    const Tensor& go = g.grad_of(self);
    Tensor& gb = g.grad_buffer(ia);
    for_each_fiber(shape, axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
      Scalar dot = 0;
      for (std::size_t j = 0; j < len; ++j) dot += go[base + j * stride] * y[base + j * stride];
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t p = base + j * stride;
        gb[p] += y[p] * (go[p] - dot);
      }
    });
  });
}

Var log_softmax(Var a, int axis) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  axis = norm_axis(axis, av.rank(), "log_softmax");
  Tensor out(av.shape());
  for_each_fiber(av.shape(), axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
    Scalar mx = av[base];
    for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, av[base + j * stride]);
    Scalar total = 0;
    for (std::size_t j = 0; j < len; ++j) total += std::exp(av[base + j * stride] - mx);
    const Scalar lse = mx + std::log(total);
    for (std::size_t j = 0; j < len; ++j) out[base + j * stride] = av[base + j * stride] - lse;
  });
  const int ia = a.id;
  const Shape shape = av.shape();
  return g.record(std::move(out), {ia}, [ia, axis, shape](Graph& g, int self) {
    const Tensor& y = g.value(self);
    const Tensor& go = g.grad_of(self);
    Tensor& gb = g.grad_buffer(ia);
    for_each_fiber(shape, axis, [&](std::size_t base, std::size_t stride, std::size_t len) {
      Scalar total = 0;
      for (std::size_t j = 0; j < len; ++j) total += go[base + j * stride];
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t p = base + j * stride;
        gb[p] += go[p] - std::exp(y[p]) * total;
      }
    });
  });
}

Var relu(Var a) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  mvec(out) = mvec(out).max(Scalar(0));
  const int ia = a.id;
  return g.record(std::move(out), {ia}, [ia](Graph& g, int self) {
    const auto y = cvec(g.value(self));
    mvec(g.grad_buffer(ia)) += (y > Scalar(0)).select(cvec(g.grad_of(self)), Scalar(0));
  });
}

Var layer_norm(Var x, Var gain, Var bias, Scalar eps) {
  Graph& g = graph_of(x);
  same_graph(x, gain);
  same_graph(x, bias);
  const Tensor& xv = x.value();
  const int d = xv.cols();
  if (bias_width(gain.shape()) != d) shape_fail("layer_norm(gain)", xv.shape(), gain.shape());
  if (bias_width(bias.shape()) != d) shape_fail("layer_norm(bias)", xv.shape(), bias.shape());
  const int n = static_cast<int>(xv.size() / d);
  auto xhat = std::make_shared<Tensor>(Shape{n, d});
  auto rstd = std::make_shared<std::vector<Scalar>>(n);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (int r = 0; r < n; ++r) {
    const Scalar* row = xv.data() + static_cast<std::size_t>(r) * d;
    Scalar mu = 0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    Scalar var = 0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const Scalar rs = Scalar(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int j = 0; j < d; ++j) {
      const Scalar h = (row[j] - mu) * rs;
      xhat->at(r, j) = h;
      out[static_cast<std::size_t>(r) * d + j] = h * gv[j] + bv[j];
    }
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return g.record(std::move(out), {ix, ig, ib}, [ix, ig, ib, n, d, xhat, rstd](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& gv = g.value(ig);
    if (g.needs_grad(ig) || g.needs_grad(ib)) {
      Tensor* gg = g.needs_grad(ig) ? &g.grad_buffer(ig) : nullptr;
      Tensor* gbias = g.needs_grad(ib) ? &g.grad_buffer(ib) : nullptr;
      for (int r = 0; r < n; ++r) {
        for (int j = 0; j < d; ++j) {
          const Scalar gr = go[static_cast<std::size_t>(r) * d + j];
          if (gg) (*gg)[j] += gr * xhat->at(r, j);
          if (gbias) (*gbias)[j] += gr;
        }
      }
    }
    if (g.needs_grad(ix)) {
      Tensor& gx = g.grad_buffer(ix);
      std::vector<Scalar> dh(d);
      for (int r = 0; r < n; ++r) {
        Scalar mean_dh = 0, mean_dh_h = 0;
        for (int j = 0; j < d; ++j) {
          dh[j] = go[static_cast<std::size_t>(r) * d + j] * gv[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * xhat->at(r, j);
        }
        mean_dh /= d;
        mean_dh_h /= d;
        for (int j = 0; j < d; ++j) {
          gx[static_cast<std::size_t>(r) * d + j] += (*rstd)[r] * (dh[j] - mean_dh - xhat->at(r, j) * mean_dh_h);
        }
      }
    }
  });
}

Var mean(Var a, int axis) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  axis = norm_axis(axis, av.rank(), "mean");
  const Shape& s = av.shape();
  if (s[axis] == 0) throw ShapeError("mean: empty axis in shape " + shape_str(s));
  Shape out_shape;
  for (int i = 0; i < av.rank(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  if (out_shape.empty()) out_shape = {1};
  const AxisSplit sp = split_axis(s, axis);
  Tensor out(out_shape);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(sp.len);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t j = 0; j < sp.len; ++j) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        out[o * sp.inner + in] += av[(o * sp.len + j) * sp.inner + in];
      }
    }
  }
  mvec(out) *= inv;
  const int ia = a.id;
  return g.record(std::move(out), {ia}, [ia, sp, inv](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    Tensor& gb = g.grad_buffer(ia);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t j = 0; j < sp.len; ++j) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          gb[(o * sp.len + j) * sp.inner + in] += go[o * sp.inner + in] * inv;
        }
      }
    }
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  Scalar total = 0;
  for (Scalar v : a.value().vec()) total += v;
  const int ia = a.id;
  return g.record(Tensor::scalar(total), {ia}, [ia](Graph& g, int self) {
    mvec(g.grad_buffer(ia)) += g.grad_of(self)[0];
  });
}

Var pick(Var a, int flat_index) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  if (flat_index < 0 || static_cast<std::size_t>(flat_index) >= av.size()) {
    throw std::out_of_range("pick: index " + std::to_string(flat_index) + " outside " + shape_str(av.shape()));
  }
  const int ia = a.id;
  return g.record(Tensor::scalar(av[flat_index]), {ia}, [ia, flat_index](Graph& g, int self) {
    g.grad_buffer(ia)[flat_index] += g.grad_of(self)[0];
  });
}

Var cross_entropy(Var logits, std::span<const int> labels, int ignore_label) {
  Graph& g = graph_of(logits);
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || static_cast<std::size_t>(lv.dim(0)) != labels.size()) {
    shape_fail("cross_entropy", lv.shape(), Shape{static_cast<int>(labels.size())});
  }
  const int n = lv.dim(0), c = lv.dim(1);
  auto probs = std::make_shared<Tensor>(Shape{n, c});
  std::vector<int> lab(labels.begin(), labels.end());
  Scalar total = 0;
  int count = 0;
  for (int r = 0; r < n; ++r) {
    const Scalar* row = lv.data() + static_cast<std::size_t>(r) * c;
    Scalar mx = *std::max_element(row, row + c);
    Scalar z = 0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const Scalar lse = mx + std::log(z);
    for (int j = 0; j < c; ++j) probs->at(r, j) = std::exp(row[j] - lse);
    if (lab[r] == ignore_label) continue;
    if (lab[r] < 0 || lab[r] >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(lab[r]) + " outside " + std::to_string(c) +
                              " classes");
    }
    total += lse - row[lab[r]];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every label is ignored");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(count);
  const int il = logits.id;
  return g.record(Tensor::scalar(total * inv), {il},
                  [il, lab, probs, n, c, inv, ignore_label](Graph& g, int self) {
                    const Scalar up = g.grad_of(self)[0] * inv;
                    Tensor& gb = g.grad_buffer(il);
                    for (int r = 0; r < n; ++r) {
                      if (lab[r] == ignore_label) continue;
                      Scalar* dst = gb.data() + static_cast<std::size_t>(r) * c;
                      for (int j = 0; j < c; ++j) dst[j] += up * probs->at(r, j);
                      dst[lab[r]] -= up;
                    }
                  });
}

Var kl_divergence(Var p, Var q) {
  Graph& g = graph_of(p);
  same_graph(p, q);
  if (p.shape() != q.shape()) shape_fail("kl_divergence", p.shape(), q.shape());
  const Tensor& pv = p.value();
  const Tensor& qv = q.value();
  Scalar total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] > 0) total += pv[i] * (std::log(pv[i]) - std::log(qv[i]));
  }
  const int ip = p.id, iq = q.id;
  return g.record(Tensor::scalar(total), {ip, iq}, [ip, iq](Graph& g, int self) {
    const Scalar up = g.grad_of(self)[0];
    const Tensor& pv = g.value(ip);
    const Tensor& qv = g.value(iq);
    if (g.needs_grad(ip)) {
      Tensor& gp = g.grad_buffer(ip);
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i] > 0) gp[i] += up * (std::log(pv[i]) - std::log(qv[i]) + Scalar(1));
      }
    }
    if (g.needs_grad(iq)) {
      Tensor& gq = g.grad_buffer(iq);
      for (std::size_t i = 0; i < pv.size(); ++i) gq[i] -= up * pv[i] / qv[i];
    }
  });
}

Var l2_norm(Var a) {
  Graph& g = graph_of(a);
  const Scalar norm = std::sqrt(cvec(a.value()).square().sum());
  const int ia = a.id;
  return g.record(Tensor::scalar(norm), {ia}, [ia](Graph& g, int self) {
    const Scalar nv = g.value(self)[0];
    if (nv == Scalar(0)) return;
    mvec(g.grad_buffer(ia)) += (g.grad_of(self)[0] / nv) * cvec(g.value(ia));
  });
}

Var causal_attention(Var q, Var k, Var v, int heads) {
  Graph& g = graph_of(q);
  same_graph(q, k);
  same_graph(q, v);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2) shape_fail("causal_attention", qv.shape(), kv.shape());
  if (kv.shape() != vv.shape()) shape_fail("causal_attention(k,v)", kv.shape(), vv.shape());
  const int t = qv.dim(0), d = qv.dim(1), s = kv.dim(0);
  if (kv.dim(1) != d || s < t) shape_fail("causal_attention(q,k)", qv.shape(), kv.shape());
  if (heads <= 0 || d % heads != 0) throw ShapeError("causal_attention: width not divisible by heads");
  const int dh = d / heads;
  const int offset = s - t;
  const Scalar sc = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  auto probs = std::make_shared<std::vector<RowMat>>(heads);
  Tensor out({t, d});
  const Eigen::OuterStride<> stride(d);
  for (int h = 0; h < heads; ++h) {
    ConstStridedMap qh(qv.data() + h * dh, t, dh, stride);
    ConstStridedMap kh(kv.data() + h * dh, s, dh, stride);
    ConstStridedMap vh(vv.data() + h * dh, s, dh, stride);
    RowMat scores = (qh * kh.transpose()) * sc;
    for (int i = 0; i < t; ++i) {
      const int limit = offset + i;
      Scalar mx = scores.row(i).head(limit + 1).maxCoeff();
      Scalar z = 0;
      for (int j = 0; j <= limit; ++j) {
        scores(i, j) = std::exp(scores(i, j) - mx);
        z += scores(i, j);
      }
      for (int j = 0; j <= limit; ++j) scores(i, j) /= z;
      for (int j = limit + 1; j < s; ++j) scores(i, j) = 0;
    }
    StridedMap oh(out.data() + h * dh, t, dh, stride);
    oh.noalias() = scores * vh;
    (*probs)[h] = std::move(scores);
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return g.record(std::move(out), {iq, ik, iv}, [=](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& qv = g.value(iq);
    const Tensor& kv = g.value(ik);
    const Tensor& vv = g.value(iv);
    Tensor* gq = g.needs_grad(iq) ? &g.grad_buffer(iq) : nullptr;
    Tensor* gk = g.needs_grad(ik) ? &g.grad_buffer(ik) : nullptr;
    Tensor* gvv = g.needs_grad(iv) ? &g.grad_buffer(iv) : nullptr;
    const Eigen::OuterStride<> stride(d);
    for (int h = 0; h < heads; ++h) {
      const RowMat& p = (*probs)[h];
      ConstStridedMap goh(go.data() + h * dh, t, dh, stride);
      ConstStridedMap qh(qv.data() + h * dh, t, dh, stride);
      ConstStridedMap kh(kv.data() + h * dh, s, dh, stride);
      ConstStridedMap vh(vv.data() + h * dh, s, dh, stride);
      if (gvv) StridedMap(gvv->data() + h * dh, s, dh, stride).noalias() += p.transpose() * goh;
      if (!gq && !gk) continue;
      RowMat dp = goh * vh.transpose();
      RowMat ds = p.cwiseProduct((dp.colwise() - p.cwiseProduct(dp).rowwise().sum()));
      ds *= sc;
      if (gq) StridedMap(gq->data() + h * dh, t, dh, stride).noalias() += ds * kh;
      if (gk) StridedMap(gk->data() + h * dh, s, dh, stride).noalias() += ds.transpose() * qh;
    }
  });
}

Var custom_unary(Var x, std::function<Tensor(const Tensor&)> forward,
                 std::function<Tensor(const Tensor&, const Tensor&)> backward) {
  Graph& g = graph_of(x);
  Tensor out = forward(x.value());
  const int ix = x.id;
  return g.record(std::move(out), {ix}, [ix, backward](Graph& g, int self) {
    Tensor dx = backward(g.value(ix), g.grad_of(self));
    if (dx.shape() != g.value(ix).shape()) shape_fail("custom_unary(backward)", dx.shape(), g.value(ix).shape());
    mvec(g.grad_buffer(ix)) += cvec(dx);
  });
}

}  // namespace steerlm::ad
