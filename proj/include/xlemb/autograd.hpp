#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "xlemb/tensor.hpp"

namespace xlemb {

// Reverse-mode tape. Operations executed while a Tape is alive push adjoint
// closures; backward() replays them in exact reverse order. One backward per
// tape: rebuilding the forward pass (a fresh tape) is required for another
// gradient. Tapes nest; the innermost active tape records.
template <typename S>
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::TensorNode<S>>;

  Tape() : id_(next_id_.fetch_add(1, std::memory_order_relaxed)), prev_(current_) {
    current_ = this;
  }
  ~Tape() { current_ = prev_; }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  std::uint64_t id() const { return id_; }
  std::size_t num_records() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  void record(std::function<void()> adjoint) {
    records_.push_back(std::move(adjoint));
  }

  // Registers a node for gradient bookkeeping (deduplicated).
  void touch(const NodePtr& n) {
    if (n->touch_mark == id_) return;
    n->touch_mark = id_;
    touched_.push_back(n);
  }

  void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) {
      throw NumericError("backward requires a scalar loss, shape is " +
                         shape_str(loss.shape()));
    }
    if (loss.node()->producer_tape != id_) {
      throw NumericError(
          "loss was not produced on this tape (stale tape or constant loss)");
    }
    if (consumed_) {
      throw NumericError(
          "tape already consumed by backward; rerun the forward pass");
    }
    for (const NodePtr& n : touched_) {
      if (n->requires_grad) n->zero_grad();
    }
    loss.node()->grad[0] = S(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    consumed_ = true;
  }

 private:
  std::uint64_t id_;
  Tape* prev_;
  std::vector<std::function<void()>> records_;
  std::vector<NodePtr> touched_;
  bool consumed_ = false;

  static inline thread_local Tape* current_ = nullptr;
  static inline std::atomic<std::uint64_t> next_id_{1};
};

template <typename S>
void backward(const Tensor<S>& loss, Tape<S>& tape) {
  tape.backward(loss);
}

}  // namespace xlemb
