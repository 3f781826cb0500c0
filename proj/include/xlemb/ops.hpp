#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "xlemb/autograd.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/tensor.hpp"

namespace xlemb {

template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using EMap = Eigen::Map<EMat<S>>;
template <typename S>
using ECMap = Eigen::Map<const EMat<S>>;

// Boolean attention mask; keep(r,c) == true means query r may attend key c.
struct AttnMask {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> keep;

  static AttnMask causal(std::size_t t) {
    AttnMask m;
    m.rows = m.cols = t;
    m.keep.assign(t * t, 0);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.keep[i * t + j] = 1;
    return m;
  }

  static AttnMask key_prefix(std::size_t rows, std::size_t cols,
                             std::size_t valid) {
    AttnMask m;
    m.rows = rows;
    m.cols = cols;
    m.keep.assign(rows * cols, 0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < valid && j < cols; ++j) m.keep[i * cols + j] = 1;
    return m;
  }

  bool at(std::size_t r, std::size_t c) const { return keep[r * cols + c] != 0; }
};

namespace detail {

// Returns true when the current tape should record this op; if so, marks the
// output and registers all nodes with the tape.
template <typename S>
bool track_op(Tape<S>* tape, std::initializer_list<const Tensor<S>*> ins,
              Tensor<S>& out) {
  if (!tape) return false;
  bool any = false;
  for (const Tensor<S>* t : ins) any = any || t->requires_grad();
  if (!any) return false;
  out.node()->requires_grad = true;
  out.node()->producer_tape = tape->id();
  for (const Tensor<S>* t : ins) tape->touch(t->node());
  tape->touch(out.node());
  return true;
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                        const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Numerically stabilized softmax over each row; masked entries become exactly
// zero. Throws on a fully masked row.
template <typename S>
void softmax_rows_kernel(const S* in, S* out, std::size_t rows,
                         std::size_t cols, const AttnMask* mask) {
  for (std::size_t r = 0; r < rows; ++r) {
    const S* x = in + r * cols;
    S* y = out + r * cols;
    S mx = S(0);
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask && !mask->at(r, c)) continue;
      if (!any || x[c] > mx) mx = x[c];
      any = true;
    }
    if (!any) {
      throw DataError("softmax: fully masked row " + std::to_string(r));
    }
    S sum = S(0);
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask && !mask->at(r, c)) {
        y[c] = S(0);
      } else {
        y[c] = std::exp(x[c] - mx);
        sum += y[c];
      }
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= sum;
  }
}

// Adjoint of row softmax given the forward output: dx = y .* (dy - <dy, y>).
// Works unchanged with masks because masked outputs are exactly zero.
template <typename S>
void softmax_rows_backward(const S* y, const S* dy, S* dx, std::size_t rows,
                           std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const S* yr = y + r * cols;
    const S* dyr = dy + r * cols;
    S* dxr = dx + r * cols;
    S dot = S(0);
    for (std::size_t c = 0; c < cols; ++c) dot += dyr[c] * yr[c];
    for (std::size_t c = 0; c < cols; ++c) dxr[c] += yr[c] * (dyr[c] - dot);
  }
}

}  // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<S> out = Tensor<S>::zeros({m, n});
  EMap<S>(out.mutable_value().data(), m, n).noalias() =
      ECMap<S>(a.value().data(), m, k) * ECMap<S>(b.value().data(), k, n);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a, &b}, out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on, m, k, n]() {
      ECMap<S> dO(on->grad.data(), m, n);
      if (an->requires_grad) {
        EMap<S>(an->grad.data(), m, k).noalias() +=
            dO * ECMap<S>(bn->value.data(), k, n).transpose();
      }
      if (bn->requires_grad) {
        EMap<S>(bn->grad.data(), k, n).noalias() +=
            ECMap<S>(an->value.data(), m, k).transpose() * dO;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose2d: rank 2 required, got " +
                     shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<S> out = Tensor<S>::zeros({n, m});
  EMap<S>(out.mutable_value().data(), n, m) =
      ECMap<S>(a.value().data(), m, n).transpose();
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a}, out)) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, m, n]() {
      if (an->requires_grad) {
        EMap<S>(an->grad.data(), m, n) +=
            ECMap<S>(on->grad.data(), n, m).transpose();
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.mutable_value()[i] = a.value()[i] + b.value()[i];
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a, &b}, out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        if (an->requires_grad) an->grad[i] += on->grad[i];
        if (bn->requires_grad) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.mutable_value()[i] = a.value()[i] - b.value()[i];
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a, &b}, out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        if (an->requires_grad) an->grad[i] += on->grad[i];
        if (bn->requires_grad) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.mutable_value()[i] = a.value()[i] * b.value()[i];
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a, &b}, out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        if (an->requires_grad) an->grad[i] += on->grad[i] * bn->value[i];
        if (bn->requires_grad) bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.mutable_value()[i] = a.value()[i] * c;
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a}, out)) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, n, c]() {
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.mutable_value()[i] = a.value()[i] + c;
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a}, out)) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, n]() {
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

// Sum of a nonempty list of same-shape tensors.
template <typename S>
Tensor<S> add_list(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw ShapeError("add_list: empty list");
  for (const auto& x : xs) detail::require_same_shape(xs[0], x, "add_list");
  Tensor<S> out = Tensor<S>::zeros(xs[0].shape());
  const std::size_t n = out.size();
  for (const auto& x : xs)
    for (std::size_t i = 0; i < n; ++i) out.mutable_value()[i] += x.value()[i];
  Tape<S>* tape = Tape<S>::current();
  std::vector<const Tensor<S>*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  bool any = false;
  for (const auto& x : xs) any = any || x.requires_grad();
  if (tape && any) {
    out.node()->requires_grad = true;
    out.node()->producer_tape = tape->id();
    std::vector<std::shared_ptr<detail::TensorNode<S>>> in_nodes;
    for (const auto& x : xs) {
      tape->touch(x.node());
      in_nodes.push_back(x.node());
    }
    tape->touch(out.node());
    auto on = out.node();
    tape->record([in_nodes, on, n]() {
      for (const auto& xn : in_nodes) {
        if (!xn->requires_grad) continue;
        for (std::size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

// Elementwise quotient of two scalars (used for norm-balanced distances).
template <typename S>
Tensor<S> div_ss(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.size() != 1 || b.size() != 1) {
    throw ShapeError("div_ss: scalars required, got " + shape_str(a.shape()) +
                     " / " + shape_str(b.shape()));
  }
  Tensor<S> out = Tensor<S>::scalar(a.value()[0] / b.value()[0]);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a, &b}, out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on]() {
      const S bv = bn->value[0];
      if (an->requires_grad) an->grad[0] += on->grad[0] / bv;
      if (bn->requires_grad)
        bn->grad[0] -= on->grad[0] * an->value[0] / (bv * bv);
    });
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.mutable_value()[i] = a.value()[i] > S(0) ? a.value()[i] : S(0);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a}, out)) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, n]() {
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          if (an->value[i] > S(0)) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

// x @ W + b with b broadcast over rows.
template <typename S>
Tensor<S> affine(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.cols() != w.rows() ||
      w.cols() != b.shape()[0]) {
    throw ShapeError("affine: incompatible shapes " + shape_str(x.shape()) +
                     " @ " + shape_str(w.shape()) + " + " +
                     shape_str(b.shape()));
  }
  const std::size_t r = x.rows(), d = x.cols(), m = w.cols();
  Tensor<S> out = Tensor<S>::zeros({r, m});
  EMap<S> O(out.mutable_value().data(), r, m);
  O.noalias() = ECMap<S>(x.value().data(), r, d) * ECMap<S>(w.value().data(), d, m);
  O.rowwise() +=
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.value().data(), m);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x, &w, &b}, out)) {
    auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    tape->record([xn, wn, bn, on, r, d, m]() {
      ECMap<S> dO(on->grad.data(), r, m);
      if (xn->requires_grad) {
        EMap<S>(xn->grad.data(), r, d).noalias() +=
            dO * ECMap<S>(wn->value.data(), d, m).transpose();
      }
      if (wn->requires_grad) {
        EMap<S>(wn->grad.data(), d, m).noalias() +=
            ECMap<S>(xn->value.data(), r, d).transpose() * dO;
      }
      if (bn->requires_grad) {
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(bn->grad.data(), m) +=
            dO.colwise().sum();
      }
    });
  }
  return out;
}

// Row lookup: out[i] = table[ids[i]]. Backward scatter-adds into the table.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw ShapeError("gather_rows: table must be rank 2, got " +
                     shape_str(table.shape()));
  }
  const std::size_t v = table.rows(), d = table.cols(), n = ids.size();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw DataError("gather_rows: id " + std::to_string(id) +
                      " out of range [0, " + std::to_string(v) + ")");
    }
  }
  Tensor<S> out = Tensor<S>::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const S* src = table.value().data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(src, src + d, out.mutable_value().data() + i * d);
  }
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&table}, out)) {
    auto tn = table.node();
    auto on = out.node();
    tape->record([tn, on, ids, d, n]() {
      if (!tn->requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        S* dst = tn->grad.data() + static_cast<std::size_t>(ids[i]) * d;
        const S* src = on->grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// Differentiable row slice [r0, r1).
template <typename S>
Tensor<S> block_rows(const Tensor<S>& x, std::size_t r0, std::size_t r1) {
  if (x.rank() != 2 || r0 > r1 || r1 > x.rows()) {
    throw ShapeError("block_rows: invalid range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") for " + shape_str(x.shape()));
  }
  const std::size_t d = x.cols(), n = r1 - r0;
  Tensor<S> out = Tensor<S>::zeros({n, d});
  std::copy(x.value().data() + r0 * d, x.value().data() + r1 * d,
            out.mutable_value().data());
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x}, out)) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on, r0, n, d]() {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < n * d; ++i) xn->grad[r0 * d + i] += on->grad[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: empty list");
  std::size_t total = 0;
  const std::size_t d = xs[0].rank() == 2 ? xs[0].cols() : 0;
  for (const auto& x : xs) {
    if (x.rank() != 2 || x.cols() != d) {
      throw ShapeError("concat_rows: column mismatch at " +
                       shape_str(x.shape()));
    }
    total += x.rows();
  }
  Tensor<S> out = Tensor<S>::zeros({total, d});
  std::size_t row = 0;
  for (const auto& x : xs) {
    std::copy(x.value().begin(), x.value().end(),
              out.mutable_value().data() + row * d);
    row += x.rows();
  }
  Tape<S>* tape = Tape<S>::current();
  bool any = false;
  for (const auto& x : xs) any = any || x.requires_grad();
  if (tape && any) {
    out.node()->requires_grad = true;
    out.node()->producer_tape = tape->id();
    std::vector<std::shared_ptr<detail::TensorNode<S>>> in_nodes;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& x : xs) {
      tape->touch(x.node());
      in_nodes.push_back(x.node());
      offsets.push_back(off);
      off += x.size();
    }
    tape->touch(out.node());
    auto on = out.node();
    tape->record([in_nodes, offsets, on]() {
      for (std::size_t k = 0; k < in_nodes.size(); ++k) {
        const auto& xn = in_nodes[k];
        if (!xn->requires_grad) continue;
        const std::size_t off = offsets[k];
        for (std::size_t i = 0; i < xn->value.size(); ++i)
          xn->grad[i] += on->grad[off + i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor<S> out = Tensor<S>::zeros({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy(a.value().data() + i * ca, a.value().data() + (i + 1) * ca,
              out.mutable_value().data() + i * (ca + cb));
    std::copy(b.value().data() + i * cb, b.value().data() + (i + 1) * cb,
              out.mutable_value().data() + i * (ca + cb) + ca);
  }
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a, &b}, out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on, r, ca, cb]() {
      for (std::size_t i = 0; i < r; ++i) {
        const S* g = on->grad.data() + i * (ca + cb);
        if (an->requires_grad)
          for (std::size_t j = 0; j < ca; ++j) an->grad[i * ca + j] += g[j];
        if (bn->requires_grad)
          for (std::size_t j = 0; j < cb; ++j) bn->grad[i * cb + j] += g[ca + j];
      }
    });
  }
  return out;
}

// Repeats a length-d vector (or 1 x d matrix) as n identical rows.
template <typename S>
Tensor<S> broadcast_row(const Tensor<S>& v, std::size_t n) {
  std::size_t d = 0;
  if (v.rank() == 1) {
    d = v.shape()[0];
  } else if (v.rank() == 2 && v.rows() == 1) {
    d = v.cols();
  } else {
    throw ShapeError("broadcast_row: need vector or single row, got " +
                     shape_str(v.shape()));
  }
  Tensor<S> out = Tensor<S>::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(v.value().begin(), v.value().end(),
              out.mutable_value().data() + i * d);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&v}, out)) {
    auto vn = v.node();
    auto on = out.node();
    tape->record([vn, on, n, d]() {
      if (!vn->requires_grad) return;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) vn->grad[j] += on->grad[i * d + j];
    });
  }
  return out;
}

// Same data, new shape (element count must match). Gradient passes through.
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<std::size_t> new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " +
                     shape_str(new_shape) + " changes element count");
  }
  Tensor<S> out = Tensor<S>::from_data(std::move(new_shape), x.value());
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x}, out)) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on]() {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < xn->value.size(); ++i)
        xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  S s = S(0);
  for (S v : x.value()) s += v;
  Tensor<S> out = Tensor<S>::scalar(s);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x}, out)) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on]() {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += on->grad[0];
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  if (x.size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), S(1) / static_cast<S>(x.size()));
}

template <typename S>
Tensor<S> sum_sq(const Tensor<S>& x) {
  S s = S(0);
  for (S v : x.value()) s += v * v;
  Tensor<S> out = Tensor<S>::scalar(s);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x}, out)) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on]() {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < xn->value.size(); ++i)
        xn->grad[i] += S(2) * on->grad[0] * xn->value[i];
    });
  }
  return out;
}

// Sum of squared differences, as a single fused op.
template <typename S>
Tensor<S> squared_distance(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "squared_distance");
  S s = S(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const S diff = a.value()[i] - b.value()[i];
    s += diff * diff;
  }
  Tensor<S> out = Tensor<S>::scalar(s);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&a, &b}, out)) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on]() {
      const S g = on->grad[0];
      for (std::size_t i = 0; i < an->value.size(); ++i) {
        const S diff = an->value[i] - bn->value[i];
        if (an->requires_grad) an->grad[i] += S(2) * g * diff;
        if (bn->requires_grad) bn->grad[i] -= S(2) * g * diff;
      }
    });
  }
  return out;
}

// Square root of the sum of squared entries. Gradient is x / norm; at the
// origin the (sub)gradient is taken as zero.
template <typename S>
Tensor<S> frobenius_norm(const Tensor<S>& x) {
  S s = S(0);
  for (S v : x.value()) s += v * v;
  const S norm = std::sqrt(s);
  Tensor<S> out = Tensor<S>::scalar(norm);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x}, out)) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on]() {
      if (!xn->requires_grad) return;
      const S norm = on->value[0];
      if (norm <= S(0)) return;
      const S g = on->grad[0] / norm;
      for (std::size_t i = 0; i < xn->value.size(); ++i)
        xn->grad[i] += g * xn->value[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x, const AttnMask* mask = nullptr) {
  if (x.rank() != 2) {
    throw ShapeError("softmax_rows: rank 2 required, got " +
                     shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  if (mask && (mask->rows != r || mask->cols != c)) {
    throw ShapeError("softmax_rows: mask " + std::to_string(mask->rows) + "x" +
                     std::to_string(mask->cols) + " does not match " +
                     shape_str(x.shape()));
  }
  Tensor<S> out = Tensor<S>::zeros({r, c});
  detail::softmax_rows_kernel(x.value().data(), out.mutable_value().data(), r,
                              c, mask);
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x}, out)) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on, r, c]() {
      if (!xn->requires_grad) return;
      detail::softmax_rows_backward(on->value.data(), on->grad.data(),
                                    xn->grad.data(), r, c);
    });
  }
  return out;
}

// Per-row normalization to mean 0 / variance 1 followed by gain and bias.
// Accepts a rank-1 vector (treated as one row) or a rank-2 matrix.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& bias, S eps) {
  const std::size_t d = x.rank() == 1 ? x.shape()[0] : x.cols();
  const std::size_t r = x.rank() == 1 ? 1 : x.rows();
  if (x.rank() > 2 || d == 0) {
    throw ShapeError("layer_norm: need rank 1 or 2 with nonzero width, got " +
                     shape_str(x.shape()));
  }
  if (gain.rank() != 1 || gain.shape()[0] != d || bias.rank() != 1 ||
      bias.shape()[0] != d) {
    throw ShapeError("layer_norm: gain/bias must be length " +
                     std::to_string(d) + ", got " + shape_str(gain.shape()) +
                     " and " + shape_str(bias.shape()));
  }
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  std::vector<S> y(r * d);       // normalized pre-gain values
  std::vector<S> inv_sigma(r);   // 1 / sqrt(var + eps)
  const S* xv = x.value().data();
  const S* g = gain.value().data();
  const S* b = bias.value().data();
  S* ov = out.mutable_value().data();
  for (std::size_t i = 0; i < r; ++i) {
    const S* row = xv + i * d;
    S mean = S(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (std::size_t j = 0; j < d; ++j) {
      const S c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      y[i * d + j] = (row[j] - mean) * inv;
      ov[i * d + j] = y[i * d + j] * g[j] + b[j];
    }
  }
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x, &gain, &bias}, out)) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    tape->record([xn, gn, bn, on, y = std::move(y),
                  inv_sigma = std::move(inv_sigma), r, d]() {
      std::vector<S> h(d);
      for (std::size_t i = 0; i < r; ++i) {
        const S* dO = on->grad.data() + i * d;
        const S* yi = y.data() + i * d;
        S mean_h = S(0), mean_hy = S(0);
        for (std::size_t j = 0; j < d; ++j) {
          h[j] = dO[j] * gn->value[j];
          mean_h += h[j];
          mean_hy += h[j] * yi[j];
        }
        mean_h /= static_cast<S>(d);
        mean_hy /= static_cast<S>(d);
        if (xn->requires_grad) {
          S* dx = xn->grad.data() + i * d;
          for (std::size_t j = 0; j < d; ++j)
            dx[j] += inv_sigma[i] * (h[j] - mean_h - yi[j] * mean_hy);
        }
        if (gn->requires_grad)
          for (std::size_t j = 0; j < d; ++j) gn->grad[j] += dO[j] * yi[j];
        if (bn->requires_grad)
          for (std::size_t j = 0; j < d; ++j) bn->grad[j] += dO[j];
      }
    });
  }
  return out;
}

// Inverted dropout: keeps each entry with probability 1-p and rescales by
// 1/(1-p). Identity (and RNG-untouched) when disabled or p == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng& rng, bool enabled) {
  if (p < 0.0 || p >= 1.0) {
    throw DataError("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!enabled || p == 0.0) return x;
  const std::size_t n = x.size();
  std::vector<S> mask(n);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = rng.uniform() >= p ? keep_scale : S(0);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    out.mutable_value()[i] = x.value()[i] * mask[i];
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&x}, out)) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on, mask = std::move(mask)]() {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < xn->value.size(); ++i)
        xn->grad[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

}  // namespace xlemb
