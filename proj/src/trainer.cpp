#include "xlemb/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "xlemb/losses.hpp"
#include "xlemb/optim.hpp"

namespace xlemb {

namespace fs = std::filesystem;

namespace {

bool same_model(const ModelConfig& a, const ModelConfig& b) {
  return a.d_model == b.d_model && a.n_heads == b.n_heads && a.d_fc == b.d_fc &&
         a.n_enc_layers == b.n_enc_layers && a.n_dec_layers == b.n_dec_layers &&
         a.vocab_size == b.vocab_size && a.n_languages == b.n_languages &&
         a.d_lang == b.d_lang && a.max_positions == b.max_positions;
}

ModelConfig finalize_model(ModelConfig cfg, const Vocabulary& vocab,
                           std::size_t n_languages, double dropout_p) {
  if (cfg.vocab_size == 0) {
    cfg.vocab_size = vocab.size();
  } else if (cfg.vocab_size != vocab.size()) {
    throw ConfigError("model.vocab_size " + std::to_string(cfg.vocab_size) +
                      " does not match the vocabulary (" +
                      std::to_string(vocab.size()) + " entries)");
  }
  if (cfg.n_languages == 0) {
    cfg.n_languages = n_languages;
  } else if (cfg.n_languages < n_languages) {
    throw ConfigError("model.n_languages " + std::to_string(cfg.n_languages) +
                      " too small for a corpus of " +
                      std::to_string(n_languages) + " languages");
  }
  cfg.dropout_p = dropout_p;
  cfg.lazy_final_layer = false;
  cfg.validate();
  return cfg;
}

}  // namespace

TrainResult train(const TrainJob& job, const ParallelCorpus& corpus,
                  const Vocabulary& vocab, const std::string& out_dir) {
  job.train.validate();
  job.loss.validate();
  job.data.validate();
  if (corpus.size() == 0) throw DataError("train: empty corpus");

  Vocabulary v = vocab;
  v.set_languages(corpus.languages);
  const ModelConfig cfg =
      finalize_model(job.model, v, corpus.languages.size(), job.train.dropout_p);

  std::pair<std::string, std::string> pivots;
  if (job.data.pivots.empty()) {
    pivots = {corpus.languages[0], corpus.languages[1]};
  } else {
    pivots = {job.data.pivots[0], job.data.pivots[1]};
  }
  const std::vector<CurriculumDirection> directions =
      build_curriculum(corpus.languages, pivots, job.bilingual);
  const EncodedCorpus encoded = encode_corpus(corpus, v);

  fs::create_directories(out_dir);
  const Rng root(job.train.seed);

  Checkpoint state;
  state.train = job.train;
  state.loss = job.loss;
  state.vocab = v;
  if (job.resume_from.empty()) {
    state.model = cfg;
    Rng init_rng = root.child("init");
    state.params = ModelParams<float>::init(cfg, init_rng);
    auto named0 = state.params.named();
    state.adam.init_like(named0);
    state.step = 0;
    state.epoch = 0;
  } else {
    Checkpoint ckpt = load_checkpoint(job.resume_from);
    if (!same_model(ckpt.model, cfg)) {
      throw ConfigError("resume: model configuration differs from checkpoint " +
                        job.resume_from);
    }
    if (ckpt.train.seed != job.train.seed) {
      throw ConfigError("resume: train.seed " + std::to_string(job.train.seed) +
                        " differs from checkpoint seed " +
                        std::to_string(ckpt.train.seed));
    }
    if (serialize_vocab(ckpt.vocab) != serialize_vocab(v) ||
        ckpt.vocab.languages != v.languages) {
      throw ConfigError("resume: vocabulary differs from checkpoint " +
                        job.resume_from);
    }
    state.model = cfg;
    state.params = std::move(ckpt.params);
    state.adam = std::move(ckpt.adam);
    state.step = ckpt.step;
    state.epoch = ckpt.epoch;
  }
  state.params.set_requires_grad(true);
  auto named = state.params.named();

  TrainResult result;
  result.log_path = out_dir + "/train_log.ndjson";
  result.final_checkpoint = out_dir + "/final.ckpt";
  std::ofstream log(result.log_path,
                    job.resume_from.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("train: cannot open log " + result.log_path);

  auto write_epoch_ckpt = [&](std::size_t completed) {
    state.epoch = completed;
    save_checkpoint(state,
                    out_dir + "/epoch_" + std::to_string(completed) + ".ckpt");
  };
  if (job.resume_from.empty()) write_epoch_ckpt(0);

  const bool constrained = job.loss.beta != 0.0 || job.loss.lambda != 0.0;
  const int pad = Vocabulary::kPad;

  for (std::size_t epoch = state.epoch; epoch < job.train.n_epochs; ++epoch) {
    // Per-direction batch lists; order reshuffles every epoch.
    std::vector<std::vector<Batch>> lists;
    std::size_t rounds = 0;
    for (const auto& dir : directions) {
      const std::uint64_t seed =
          root.child("batches." + dir.src + "-" + dir.tgt, epoch).next_u64();
      lists.push_back(make_batches(encoded, dir, job.train.max_tokens, seed));
      rounds = std::max(rounds, lists.back().size());
    }

    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t r = 0; r < rounds; ++r) {
      for (std::size_t d = 0; d < directions.size(); ++d) {
        if (r >= lists[d].size()) continue;
        const Batch& batch = lists[d][r];
        const std::size_t n = batch.src.n;
        const std::size_t step = state.step + 1;
        const auto t0 = std::chrono::steady_clock::now();

        Rng drop_rng = root.child("dropout", step);
        const int lang = v.language_id(batch.direction.tgt);

        Tape<float> tape;
        auto [logits, pa] = translate_forward(batch.src, batch.tgt_g, lang,
                                              cfg, state.params, &drop_rng,
                                              /*train=*/true);
        Tensor<float> l_mt = label_smoothed_nll(
            logits, batch.tgt_y, job.loss.label_smoothing, pad);

        Tensor<float> total;
        LossBreakdown<float> parts;
        if (constrained) {
          std::vector<std::vector<int>> tgt_rows(n);
          for (std::size_t i = 0; i < n; ++i) {
            tgt_rows[i] = encoded.ids(batch.direction.tgt)[batch.pair_indices[i]];
          }
          const TokenBatch framed_b = frame_source_rows(tgt_rows);
          EncodeResult<float> enc_b =
              encode_batch(framed_b, cfg, state.params, &drop_rng, true);
          const std::size_t n_s = std::min<std::size_t>(job.loss.n_neg, n - 1);
          Rng neg_rng = root.child("negatives", step);
          auto [neg_ab, neg_ba] = sample_negatives(n, n_s, neg_rng);
          std::tie(total, parts) =
              total_loss(l_mt, pa, enc_b.p, neg_ab, neg_ba, job.loss);
        } else {
          std::tie(total, parts) = total_loss(l_mt, pa, pa, {}, {}, job.loss);
        }

        const double loss_value = static_cast<double>(total.item());
        if (!std::isfinite(loss_value)) {
          throw NumericError("train: non-finite loss at step " +
                             std::to_string(step) +
                             "; last epoch checkpoint is intact");
        }
        tape.backward(total);
        if (job.train.grad_clip > 0.0) {
          clip_gradients(named, job.train.grad_clip);
        }

        AdamHyper hyper;
        hyper.lr = lr_at(step, job.train.base_lr, job.train.warmup_steps);
        hyper.beta1 = job.train.adam_beta1;
        hyper.beta2 = job.train.adam_beta2;
        hyper.eps = job.train.adam_eps;
        hyper.weight_decay = job.train.weight_decay;
        adam_step(named, state.adam, hyper);
        state.step = step;

        std::size_t tokens = 0;
        for (std::size_t len : batch.src.lengths) tokens += len;
        for (std::size_t len : batch.tgt_g.lengths) tokens += len;
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();

        nlohmann::ordered_json line;
        line["step"] = step;
        line["direction"] = batch.direction.src + "-" + batch.direction.tgt;
        line["total"] = loss_value;
        line["l_mt"] = static_cast<double>(parts.l_mt);
        line["d_p_mean"] = static_cast<double>(parts.d_p_mean);
        line["delta_ab"] = static_cast<double>(parts.delta_mean_ab);
        line["delta_ba"] = static_cast<double>(parts.delta_mean_ba);
        line["v_norm"] = static_cast<double>(parts.v_norm);
        line["lr"] = hyper.lr;
        line["tokens"] = tokens;
        line["wall_ms"] = secs * 1e3;
        line["tokens_per_sec"] =
            static_cast<double>(tokens) / std::max(secs, 1e-9);
        log << line.dump() << "\n";
        log.flush();

        epoch_sum += loss_value;
        ++epoch_steps;
      }
    }
    if (epoch_steps > 0) {
      result.epoch_mean_loss.push_back(epoch_sum /
                                       static_cast<double>(epoch_steps));
    }
    write_epoch_ckpt(epoch + 1);
  }

  state.epoch = std::max<std::size_t>(state.epoch, job.train.n_epochs);
  save_checkpoint(state, result.final_checkpoint);
  result.steps = state.step;
  return result;
}

}  // namespace xlemb
