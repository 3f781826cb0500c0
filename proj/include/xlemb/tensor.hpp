#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "xlemb/common.hpp"

namespace xlemb {

namespace detail {

template <typename S>
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<S> value;
  std::vector<S> grad;  // same length as value once materialized
  bool requires_grad = false;
  std::uint64_t producer_tape = 0;  // tape that recorded this value; 0 = leaf
  std::uint64_t touch_mark = 0;     // dedupe marker for tape registration

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
  void zero_grad() {
    ensure_grad();
    std::fill(grad.begin(), grad.end(), S(0));
  }
};

}  // namespace detail

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Value-semantics handle to a shared tensor node. Copies alias the same
// storage; operations allocate fresh nodes. Scalars have shape (1).
template <typename S>
class Tensor {
 public:
  using Node = detail::TensorNode<S>;

  Tensor() : node_(std::make_shared<Node>()) {}

  static Tensor zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.node_->value.assign(shape_numel(shape), S(0));
    t.node_->shape = std::move(shape);
    return t;
  }

  static Tensor full(std::vector<std::size_t> shape, S v) {
    Tensor t;
    t.node_->value.assign(shape_numel(shape), v);
    t.node_->shape = std::move(shape);
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor from_data(std::vector<std::size_t> shape, std::vector<S> data) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("from_data: shape " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::size_t rows() const {
    require_rank2("rows");
    return node_->shape[0];
  }
  std::size_t cols() const {
    require_rank2("cols");
    return node_->shape[1];
  }

  const std::vector<S>& value() const { return node_->value; }
  // Direct write access; intended for leaves (parameter init, optimizer
  // updates between tapes) and for op kernels filling fresh outputs.
  std::vector<S>& mutable_value() { return node_->value; }

  const std::vector<S>& grad() const {
    if (node_->grad.size() != node_->value.size()) {
      throw NumericError("tensor has no gradient; run backward first");
    }
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  S item() const {
    if (size() != 1) {
      throw ShapeError("item() requires a scalar, shape is " +
                       shape_str(node_->shape));
    }
    return node_->value[0];
  }

  S at(std::size_t i) const { return node_->value.at(i); }
  S at(std::size_t r, std::size_t c) const {
    require_rank2("at");
    return node_->value.at(r * node_->shape[1] + c);
  }

  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  void require_rank2(const char* what) const {
    if (node_->shape.size() != 2) {
      throw ShapeError(std::string(what) + " requires rank 2, shape is " +
                       shape_str(node_->shape));
    }
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace xlemb
