#pragma once

#include <cmath>
#include <vector>

#include "xlemb/ops.hpp"

namespace xlemb {

struct LossConfig {
  double alpha = 0.5;
  double beta = 0.25;
  double lambda = 0.125;  // beta / 2
  std::size_t n_neg = 20;
  double epsilon = 1e-6;
  double label_smoothing = 0.1;

  void validate() const {
    if (beta < 0.0 || beta > 1.0) {
      throw ConfigError("loss: beta must be in [0, 1], got " +
                        std::to_string(beta));
    }
    if (lambda < 0.0 || lambda > 1.0) {
      throw ConfigError("loss: lambda must be in [0, 1], got " +
                        std::to_string(lambda));
    }
    if (alpha <= 0.0) {
      throw ConfigError("loss: alpha must be positive, got " +
                        std::to_string(alpha));
    }
    if (epsilon <= 0.0) {
      throw ConfigError("loss: epsilon must be positive, got " +
                        std::to_string(epsilon));
    }
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
      throw ConfigError("loss: label_smoothing must be in [0, 1), got " +
                        std::to_string(label_smoothing));
    }
  }
};

template <typename S>
struct LossBreakdown {
  S l_mt = 0;
  S d_p_mean = 0;
  S delta_mean_ab = 0;  // mean over pairs of the per-pair negative-delta sum
  S delta_mean_ba = 0;
  S v_norm = 0;
  S total = 0;
};

// Label-smoothed cross entropy over flat logits, averaged over non-PAD
// positions; PAD targets are excluded. Single fused tape operation.
template <typename S>
Tensor<S> label_smoothed_nll(const Tensor<S>& logits,
                             const std::vector<int>& targets, double smoothing,
                             int pad_id) {
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw ShapeError("label_smoothed_nll: logits " + shape_str(logits.shape()) +
                     " vs " + std::to_string(targets.size()) + " targets");
  }
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw DataError("label_smoothed_nll: smoothing must be in [0, 1)");
  }
  const std::size_t r = logits.rows(), v = logits.cols();
  std::size_t n_tok = 0;
  for (int tgt : targets) {
    if (tgt != pad_id) {
      if (tgt < 0 || static_cast<std::size_t>(tgt) >= v) {
        throw DataError("label_smoothed_nll: target " + std::to_string(tgt) +
                        " outside vocabulary of " + std::to_string(v));
      }
      ++n_tok;
    }
  }
  if (n_tok == 0) {
    throw DataError("label_smoothed_nll: all targets are PAD");
  }
  const S q_gold = static_cast<S>(1.0 - smoothing + smoothing / v);
  const S q_other = static_cast<S>(smoothing / v);

  // Forward: stabilized log-softmax per non-PAD row.
  std::vector<S> probs(r * v);  // softmax rows (saved for backward)
  S loss_sum = S(0);
  const S* x = logits.value().data();
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] == pad_id) continue;
    const S* row = x + i * v;
    S mx = row[0];
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    S sum = S(0);
    for (std::size_t c = 0; c < v; ++c) sum += std::exp(row[c] - mx);
    const S log_z = std::log(sum) + mx;
    S* p = probs.data() + i * v;
    S row_loss = S(0);
    for (std::size_t c = 0; c < v; ++c) {
      const S logp = row[c] - log_z;
      p[c] = std::exp(logp);
      row_loss -= (static_cast<std::size_t>(targets[i]) == c ? q_gold : q_other) *
                  logp;
    }
    loss_sum += row_loss;
  }
  Tensor<S> out = Tensor<S>::scalar(loss_sum / static_cast<S>(n_tok));

  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&logits}, out)) {
    auto ln = logits.node();
    auto on = out.node();
    tape->record([ln, on, probs = std::move(probs), targets, pad_id, r, v,
                  n_tok, q_gold, q_other]() {
      if (!ln->requires_grad) return;
      const S g = on->grad[0] / static_cast<S>(n_tok);
      for (std::size_t i = 0; i < r; ++i) {
        if (targets[i] == pad_id) continue;
        const S* p = probs.data() + i * v;
        S* dx = ln->grad.data() + i * v;
        for (std::size_t c = 0; c < v; ++c) {
          const S q =
              static_cast<std::size_t>(targets[i]) == c ? q_gold : q_other;
          dx[c] += g * (p[c] - q);
        }
      }
    });
  }
  return out;
}

// Mean Frobenius norm over the rows of an N x d matrix the batch's norm
// scale v_norm. Differentiable; rows at the origin contribute zero gradient.
template <typename S>
Tensor<S> batch_norm_average(const Tensor<S>& embeddings) {
  if (embeddings.rank() != 2 || embeddings.rows() == 0) {
    throw ShapeError("batch_norm_average: nonempty rank-2 input required, got " +
                     shape_str(embeddings.shape()));
  }
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  std::vector<S> norms(n);
  S sum = S(0);
  for (std::size_t i = 0; i < n; ++i) {
    S s = S(0);
    const S* row = embeddings.value().data() + i * d;
    for (std::size_t c = 0; c < d; ++c) s += row[c] * row[c];
    norms[i] = std::sqrt(s);
    sum += norms[i];
  }
  Tensor<S> out = Tensor<S>::scalar(sum / static_cast<S>(n));
  Tape<S>* tape = Tape<S>::current();
  if (detail::track_op(tape, {&embeddings}, out)) {
    auto en = embeddings.node();
    auto on = out.node();
    tape->record([en, on, norms = std::move(norms), n, d]() {
      if (!en->requires_grad) return;
      const S g = on->grad[0] / static_cast<S>(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (norms[i] <= S(0)) continue;
        const S scale = g / norms[i];
        const S* row = en->value.data() + i * d;
        S* drow = en->grad.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) drow[c] += scale * row[c];
      }
    });
  }
  return out;
}

// Norm-balanced squared distance |pa - pb|^2 / (v_norm + eps).
template <typename S>
Tensor<S> paired_distance(const Tensor<S>& pa, const Tensor<S>& pb,
                          const Tensor<S>& v_norm, double eps) {
  if (eps < 0.0) throw DataError("paired_distance: eps must be nonnegative");
  return div_ss(squared_distance(pa, pb),
                add_scalar(v_norm, static_cast<S>(eps)));
}

// Margin hinge max(0, alpha - (d_n - d_p)); subgradient 0 at the kink.
template <typename S>
Tensor<S> margin_delta(const Tensor<S>& d_n, const Tensor<S>& d_p, double alpha) {
  return relu(add_scalar(sub(d_p, d_n), static_cast<S>(alpha)));
}

// The full training objective for one direction a->b:
//   total = beta * mean_i d_p(i)
//         + (lambda / N_s) * mean_i sum_j (delta_ab[i,j] + delta_ba[i,j])
//         + 0.5 * l_mt
// With beta = lambda = 0 the distance machinery is skipped entirely and the
// breakdown reports zeros for the distance fields.
template <typename S>
std::pair<Tensor<S>, LossBreakdown<S>> total_loss(
    const Tensor<S>& l_mt_ab, const Tensor<S>& pa_batch,
    const Tensor<S>& pb_batch, const std::vector<std::vector<int>>& neg_ab,
    const std::vector<std::vector<int>>& neg_ba, const LossConfig& cfg) {
  cfg.validate();
  if (l_mt_ab.size() != 1) {
    throw ShapeError("total_loss: l_mt must be a scalar");
  }
  detail::require_same_shape(pa_batch, pb_batch, "total_loss");
  if (pa_batch.rank() != 2 || pa_batch.rows() == 0) {
    throw ShapeError("total_loss: embeddings must be nonempty N x d, got " +
                     shape_str(pa_batch.shape()));
  }
  const std::size_t n = pa_batch.rows();
  const std::size_t n_neg =
      neg_ab.empty() || neg_ab[0].empty() ? 0 : neg_ab[0].size();
  const std::size_t n_neg_ba =
      neg_ba.empty() || neg_ba[0].empty() ? 0 : neg_ba[0].size();
  if (n_neg != n_neg_ba) {
    throw DataError("total_loss: neg_ab has " + std::to_string(n_neg) +
                    " columns but neg_ba has " + std::to_string(n_neg_ba));
  }
  if (n_neg > 0) {
    if (n_neg > n - 1) {
      throw DataError("total_loss: " + std::to_string(n_neg) +
                      " negatives from a batch of " + std::to_string(n));
    }
    auto check_neg = [n, n_neg](const std::vector<std::vector<int>>& neg,
                                const char* which) {
      if (neg.size() != n) {
        throw DataError(std::string("total_loss: ") + which + " has " +
                        std::to_string(neg.size()) + " rows for batch of " +
                        std::to_string(n));
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (neg[i].size() != n_neg) {
          throw DataError(std::string("total_loss: ragged ") + which);
        }
        for (int j : neg[i]) {
          if (j < 0 || static_cast<std::size_t>(j) >= n) {
            throw DataError(std::string("total_loss: ") + which +
                            " index out of range: " + std::to_string(j));
          }
          if (static_cast<std::size_t>(j) == i) {
            throw DataError(std::string("total_loss: ") + which +
                            " contains a self-negative at row " +
                            std::to_string(i));
          }
        }
      }
    };
    check_neg(neg_ab, "neg_ab");
    check_neg(neg_ba, "neg_ba");
  }

  LossBreakdown<S> parts;
  parts.l_mt = l_mt_ab.item();

  Tensor<S> half_mt = scale(l_mt_ab, S(0.5));
  if (cfg.beta == 0.0 && cfg.lambda == 0.0) {
    parts.total = half_mt.item();
    return {half_mt, parts};
  }

  Tensor<S> v_norm =
      batch_norm_average(concat_rows<S>({pa_batch, pb_batch}));
  parts.v_norm = v_norm.item();
  Tensor<S> denom = add_scalar(v_norm, static_cast<S>(cfg.epsilon));

  std::vector<Tensor<S>> a_rows, b_rows, dp;
  for (std::size_t i = 0; i < n; ++i) {
    a_rows.push_back(block_rows(pa_batch, i, i + 1));
    b_rows.push_back(block_rows(pb_batch, i, i + 1));
    dp.push_back(div_ss(squared_distance(a_rows[i], b_rows[i]), denom));
  }
  Tensor<S> d_p_mean = scale(add_list(dp), S(1) / static_cast<S>(n));
  parts.d_p_mean = d_p_mean.item();

  Tensor<S> total = add(scale(d_p_mean, static_cast<S>(cfg.beta)), half_mt);
  if (n_neg > 0) {
    std::vector<Tensor<S>> deltas_ab, deltas_ba;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n_neg; ++j) {
        Tensor<S> dn_ab =
            div_ss(squared_distance(a_rows[i], b_rows[neg_ab[i][j]]), denom);
        deltas_ab.push_back(margin_delta(dn_ab, dp[i], cfg.alpha));
        Tensor<S> dn_ba =
            div_ss(squared_distance(b_rows[i], a_rows[neg_ba[i][j]]), denom);
        deltas_ba.push_back(margin_delta(dn_ba, dp[i], cfg.alpha));
      }
    }
    Tensor<S> mean_ab = scale(add_list(deltas_ab), S(1) / static_cast<S>(n));
    Tensor<S> mean_ba = scale(add_list(deltas_ba), S(1) / static_cast<S>(n));
    parts.delta_mean_ab = mean_ab.item();
    parts.delta_mean_ba = mean_ba.item();
    total = add(total, scale(add(mean_ab, mean_ba),
                             static_cast<S>(cfg.lambda) /
                                 static_cast<S>(n_neg)));
  }
  parts.total = total.item();
  return {total, parts};
}

}  // namespace xlemb
