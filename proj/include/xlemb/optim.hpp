#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "xlemb/tensor.hpp"

namespace xlemb {

// Inverse-sqrt schedule with linear warmup from zero.
inline double lr_at(std::size_t step, double base_lr,
                    std::size_t warmup_steps) {
  if (step == 0) throw DataError("lr_at: step counts from 1");
  if (warmup_steps == 0) throw DataError("lr_at: warmup_steps must be >= 1");
  if (step <= warmup_steps) {
    return base_lr * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  }
  return base_lr * std::sqrt(static_cast<double>(warmup_steps) /
                             static_cast<double>(step));
}

struct AdamHyper {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename S>
struct AdamState {
  std::vector<std::vector<S>> m, v;  // parallel to the parameter list
  std::size_t t = 0;                 // completed updates (bias correction)

  template <typename Params>
  void init_like(const Params& named) {
    m.clear();
    v.clear();
    t = 0;
    for (const auto& [name, p] : named) {
      (void)name;
      m.emplace_back(p.size(), S(0));
      v.emplace_back(p.size(), S(0));
    }
  }
};

template <typename S>
double global_grad_norm(
    const std::vector<std::pair<std::string, Tensor<S>>>& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) {
      throw NumericError("grad norm: parameter '" + name + "' has no gradient");
    }
    for (S g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

// Scales all gradients so their global norm is at most max_norm.
template <typename S>
void clip_gradients(std::vector<std::pair<std::string, Tensor<S>>>& params,
                    double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  const S scale = static_cast<S>(max_norm / norm);
  for (auto& [name, p] : params) {
    (void)name;
    for (S& g : p.node()->grad) g *= scale;
  }
}

// One Adam update over a named parameter list. Decoupled weight decay runs
// as a multiplicative shrink before the moment update. Throws on any
// non-finite gradient, leaving parameters untouched.
template <typename S>
void adam_step(std::vector<std::pair<std::string, Tensor<S>>>& params,
               AdamState<S>& state, const AdamHyper& h) {
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " +
                     std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (!p.has_grad()) {
      throw NumericError("adam_step: parameter '" + name +
                         "' has no gradient");
    }
    if (p.size() != state.m[i].size()) {
      throw ShapeError("adam_step: state size mismatch for '" + name + "'");
    }
    for (S g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("adam_step: non-finite gradient in '" + name + "'");
      }
    }
  }

  const std::size_t t = ++state.t;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const S shrink = static_cast<S>(1.0 - h.lr * h.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S>& p = params[i].second;
    const std::vector<S>& grad = p.grad();
    std::vector<S>& value = p.mutable_value();
    std::vector<S>& m = state.m[i];
    std::vector<S>& v = state.v[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      if (h.weight_decay != 0.0) value[k] *= shrink;
      const double g = static_cast<double>(grad[k]);
      m[k] = static_cast<S>(h.beta1 * static_cast<double>(m[k]) +
                            (1.0 - h.beta1) * g);
      v[k] = static_cast<S>(h.beta2 * static_cast<double>(v[k]) +
                            (1.0 - h.beta2) * g * g);
      const double m_hat = static_cast<double>(m[k]) / bc1;
      const double v_hat = static_cast<double>(v[k]) / bc2;
      value[k] = static_cast<S>(static_cast<double>(value[k]) -
                                h.lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
  }
}

}  // namespace xlemb
