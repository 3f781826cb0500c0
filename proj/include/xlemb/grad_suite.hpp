#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "xlemb/data.hpp"
#include "xlemb/grad_check.hpp"
#include "xlemb/losses.hpp"
#include "xlemb/model.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/tokenizer.hpp"

namespace xlemb {

struct ObjectiveCheckSpec {
  ModelConfig model;
  LossConfig loss;
  std::uint64_t seed = 1;
  std::size_t n_pairs = 2;
  std::size_t n_neg = 1;
  double step = 1e-5;
  double rel_tol = 1e-3;
};

// Runs the finite-difference gradient suite over every parameter of the full
// training objective (translation loss plus the distance terms) on a random
// toy batch at 64-bit precision.
inline GradCheckReport check_objective_gradients(const ObjectiveCheckSpec& spec) {
  const ModelConfig& cfg = spec.model;
  cfg.validate();
  spec.loss.validate();
  if (spec.n_pairs < 2) {
    throw DataError("grad suite: need at least 2 sentence pairs");
  }
  if (spec.n_neg + 1 > spec.n_pairs) {
    throw DataError("grad suite: " + std::to_string(spec.n_neg) +
                    " negatives need a batch of at least " +
                    std::to_string(spec.n_neg + 1));
  }

  Rng root(spec.seed);
  Rng init_rng = root.child("init");
  ModelParams<double> params = ModelParams<double>::init(cfg, init_rng);
  params.set_requires_grad(true);

  Rng data_rng = root.child("batch");
  auto random_rows = [&](std::size_t n) {
    std::vector<std::vector<int>> rows(n);
    for (auto& r : rows) {
      const std::size_t len = 2 + data_rng.below(3);
      for (std::size_t k = 0; k < len; ++k) {
        r.push_back(static_cast<int>(
            Vocabulary::kNumReserved +
            data_rng.below(cfg.vocab_size - Vocabulary::kNumReserved)));
      }
    }
    return rows;
  };
  const auto rows_a = random_rows(spec.n_pairs);
  const auto rows_b = random_rows(spec.n_pairs);
  const TokenBatch src_a = frame_source_rows(rows_a);
  const TokenBatch src_b = frame_source_rows(rows_b);
  const TokenBatch tgt_g = eos_front_rows(rows_b);
  const std::vector<int> gold = gold_rows_flat(rows_b);
  const int tgt_lang = static_cast<int>(data_rng.below(cfg.n_languages));

  Rng neg_rng = root.child("negatives");
  auto [neg_ab, neg_ba] = sample_negatives(spec.n_pairs, spec.n_neg, neg_rng);

  auto objective = [&]() {
    auto [logits, pa] =
        translate_forward(src_a, tgt_g, tgt_lang, cfg, params, nullptr, false);
    Tensor<double> l_mt = label_smoothed_nll(
        logits, gold, spec.loss.label_smoothing, Vocabulary::kPad);
    EncodeResult<double> enc_b = encode_batch(src_b, cfg, params, nullptr, false);
    return total_loss(l_mt, pa, enc_b.p, neg_ab, neg_ba, spec.loss).first;
  };
  return grad_check(objective, params.named(), spec.step, spec.rel_tol);
}

}  // namespace xlemb
