#pragma once

#include <cmath>
#include <vector>

#include "xlemb/ops.hpp"

namespace xlemb {

// Projection weights for one multi-head attention site. Head i of n_heads
// owns the column block [i*d_k, (i+1)*d_k) of each matrix, d_k = d_model /
// n_heads; storing the heads side by side in d_model x d_model matrices is
// identical to keeping per-head d_model x d_k blocks. No biases.
template <typename S>
struct AttentionParams {
  Tensor<S> wq, wk, wv, wo;  // each d_model x d_model
};

// Scaled dot-product multi-head attention: per head, scores = (q Wq)(kv Wk)^T
// / sqrt(d_k), masked softmax over keys, weighted sum of (kv Wv); heads are
// concatenated and projected by Wo. Optional dropout on attention weights.
// Recorded as a single tape operation.
template <typename S>
Tensor<S> multi_head_attention(const Tensor<S>& q_seq, const Tensor<S>& kv_seq,
                               const AttnMask* mask,
                               const AttentionParams<S>& params,
                               std::size_t n_heads, double attn_dropout_p = 0.0,
                               Rng* rng = nullptr, bool train = false) {
  if (q_seq.rank() != 2 || kv_seq.rank() != 2 ||
      q_seq.cols() != kv_seq.cols()) {
    throw ShapeError("multi_head_attention: bad inputs " +
                     shape_str(q_seq.shape()) + " vs " +
                     shape_str(kv_seq.shape()));
  }
  const std::size_t tq = q_seq.rows(), tk = kv_seq.rows(), d = q_seq.cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw ShapeError("multi_head_attention: width " + std::to_string(d) +
                     " not divisible into " + std::to_string(n_heads) +
                     " heads");
  }
  auto check_w = [d](const Tensor<S>& w, const char* name) {
    if (w.rank() != 2 || w.rows() != d || w.cols() != d) {
      throw ShapeError(std::string("multi_head_attention: ") + name +
                       " must be " + std::to_string(d) + "x" +
                       std::to_string(d) + ", got " + shape_str(w.shape()));
    }
  };
  check_w(params.wq, "Wq");
  check_w(params.wk, "Wk");
  check_w(params.wv, "Wv");
  check_w(params.wo, "Wo");
  if (mask && (mask->rows != tq || mask->cols != tk)) {
    throw ShapeError("multi_head_attention: mask " + std::to_string(mask->rows) +
                     "x" + std::to_string(mask->cols) + " does not match " +
                     std::to_string(tq) + "x" + std::to_string(tk));
  }
  const std::size_t dk = d / n_heads;
  const S inv_sqrt_dk = S(1) / std::sqrt(static_cast<S>(dk));

  // Forward, keeping what backward needs.
  std::vector<S> qp(tq * d), kp(tk * d), vp(tk * d);
  EMap<S>(qp.data(), tq, d).noalias() =
      ECMap<S>(q_seq.value().data(), tq, d) *
      ECMap<S>(params.wq.value().data(), d, d);
  EMap<S>(kp.data(), tk, d).noalias() =
      ECMap<S>(kv_seq.value().data(), tk, d) *
      ECMap<S>(params.wk.value().data(), d, d);
  EMap<S>(vp.data(), tk, d).noalias() =
      ECMap<S>(kv_seq.value().data(), tk, d) *
      ECMap<S>(params.wv.value().data(), d, d);

  std::vector<S> attn(n_heads * tq * tk);       // softmax output per head
  std::vector<S> attn_dropped(n_heads * tq * tk);
  std::vector<S> drop_mask;
  const bool use_dropout = train && attn_dropout_p > 0.0;
  if (use_dropout) {
    if (!rng) throw DataError("multi_head_attention: dropout needs an rng");
    drop_mask.resize(n_heads * tq * tk);
  }
  std::vector<S> mixed(tq * d);  // concatenated head outputs
  {
    std::vector<S> scores(tq * tk);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - attn_dropout_p));
    for (std::size_t h = 0; h < n_heads; ++h) {
      EMap<S>(scores.data(), tq, tk).noalias() =
          ECMap<S>(qp.data(), tq, d).middleCols(h * dk, dk) *
          ECMap<S>(kp.data(), tk, d).middleCols(h * dk, dk).transpose() *
          inv_sqrt_dk;
      S* a = attn.data() + h * tq * tk;
      detail::softmax_rows_kernel(scores.data(), a, tq, tk, mask);
      S* ad = attn_dropped.data() + h * tq * tk;
      if (use_dropout) {
        S* dm = drop_mask.data() + h * tq * tk;
        for (std::size_t i = 0; i < tq * tk; ++i) {
          dm[i] = rng->uniform() >= attn_dropout_p ? keep_scale : S(0);
          ad[i] = a[i] * dm[i];
        }
      } else {
        std::copy(a, a + tq * tk, ad);
      }
      EMap<S>(mixed.data(), tq, d).middleCols(h * dk, dk).noalias() =
          ECMap<S>(ad, tq, tk) * ECMap<S>(vp.data(), tk, d).middleCols(h * dk, dk);
    }
  }
  Tensor<S> out = Tensor<S>::zeros({tq, d});
  EMap<S>(out.mutable_value().data(), tq, d).noalias() =
      ECMap<S>(mixed.data(), tq, d) * ECMap<S>(params.wo.value().data(), d, d);

  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(
          tape, {&q_seq, &kv_seq, &params.wq, &params.wk, &params.wv, &params.wo},
          out)) {
    auto qn = q_seq.node(), kvn = kv_seq.node(), on = out.node();
    auto wqn = params.wq.node(), wkn = params.wk.node(), wvn = params.wv.node(),
         won = params.wo.node();
    tape->record([qn, kvn, on, wqn, wkn, wvn, won, qp = std::move(qp),
                  kp = std::move(kp), vp = std::move(vp),
                  attn = std::move(attn), attn_dropped = std::move(attn_dropped),
                  drop_mask = std::move(drop_mask), mixed = std::move(mixed),
                  use_dropout, tq, tk, d, dk, n_heads, inv_sqrt_dk]() {
      ECMap<S> dOut(on->grad.data(), tq, d);
      // Wo and the concatenated head outputs.
      if (won->requires_grad) {
        EMap<S>(won->grad.data(), d, d).noalias() +=
            ECMap<S>(mixed.data(), tq, d).transpose() * dOut;
      }
      EMat<S> dMixed = dOut * ECMap<S>(won->value.data(), d, d).transpose();

      EMat<S> dQp = EMat<S>::Zero(tq, d);
      EMat<S> dKp = EMat<S>::Zero(tk, d);
      EMat<S> dVp = EMat<S>::Zero(tk, d);
      std::vector<S> dA(tq * tk), dScores(tq * tk);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const S* a = attn.data() + h * tq * tk;
        const S* ad = attn_dropped.data() + h * tq * tk;
        auto vph = ECMap<S>(vp.data(), tk, d).middleCols(h * dk, dk);
        auto qph = ECMap<S>(qp.data(), tq, d).middleCols(h * dk, dk);
        auto kph = ECMap<S>(kp.data(), tk, d).middleCols(h * dk, dk);
        // dropped-attention and value gradients
        EMap<S>(dA.data(), tq, tk).noalias() =
            dMixed.middleCols(h * dk, dk) * vph.transpose();
        dVp.middleCols(h * dk, dk).noalias() +=
            ECMap<S>(ad, tq, tk).transpose() * dMixed.middleCols(h * dk, dk);
        if (use_dropout) {
          const S* dm = drop_mask.data() + h * tq * tk;
          for (std::size_t i = 0; i < tq * tk; ++i) dA[i] *= dm[i];
        }
        std::fill(dScores.begin(), dScores.end(), S(0));
        detail::softmax_rows_backward(a, dA.data(), dScores.data(), tq, tk);
        for (S& v : dScores) v *= inv_sqrt_dk;
        dQp.middleCols(h * dk, dk).noalias() +=
            ECMap<S>(dScores.data(), tq, tk) * kph;
        dKp.middleCols(h * dk, dk).noalias() +=
            ECMap<S>(dScores.data(), tq, tk).transpose() * qph;
      }
      ECMap<S> qv(qn->value.data(), tq, d);
      ECMap<S> kvv(kvn->value.data(), tk, d);
      if (wqn->requires_grad)
        EMap<S>(wqn->grad.data(), d, d).noalias() += qv.transpose() * dQp;
      if (wkn->requires_grad)
        EMap<S>(wkn->grad.data(), d, d).noalias() += kvv.transpose() * dKp;
      if (wvn->requires_grad)
        EMap<S>(wvn->grad.data(), d, d).noalias() += kvv.transpose() * dVp;
      if (qn->requires_grad) {
        EMap<S>(qn->grad.data(), tq, d).noalias() +=
            dQp * ECMap<S>(wqn->value.data(), d, d).transpose();
      }
      if (kvn->requires_grad) {
        EMap<S>(kvn->grad.data(), tk, d).noalias() +=
            dKp * ECMap<S>(wkn->value.data(), d, d).transpose() +
            dVp * ECMap<S>(wvn->value.data(), d, d).transpose();
      }
    });
  }
  return out;
}

}  // namespace xlemb
