#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "xlemb/attention.hpp"
#include "xlemb/ops.hpp"
#include "xlemb/tokenizer.hpp"

namespace xlemb {

struct ModelConfig {
  std::size_t d_model = 1024;
  std::size_t n_heads = 16;
  std::size_t d_fc = 4096;
  std::size_t n_enc_layers = 6;
  std::size_t n_dec_layers = 1;
  std::size_t vocab_size = 0;
  std::size_t n_languages = 0;
  std::size_t d_lang = 32;
  std::size_t max_positions = 1024;
  double dropout_p = 0.3;
  bool lazy_final_layer = false;

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("model: d_model " + std::to_string(d_model) +
                        " must be a positive multiple of n_heads " +
                        std::to_string(n_heads));
    }
    if (d_lang == 0 || d_lang >= d_model) {
      throw ConfigError("model: d_lang " + std::to_string(d_lang) +
                        " must be in (0, d_model)");
    }
    if (vocab_size <= Vocabulary::kNumReserved) {
      throw ConfigError("model: vocab_size " + std::to_string(vocab_size) +
                        " too small");
    }
    if (n_languages == 0) throw ConfigError("model: n_languages must be > 0");
    if (n_enc_layers == 0 || n_dec_layers == 0) {
      throw ConfigError("model: need at least one encoder and decoder layer");
    }
    if (d_fc == 0 || max_positions == 0) {
      throw ConfigError("model: d_fc and max_positions must be positive");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
      throw ConfigError("model: dropout_p must be in [0, 1)");
    }
  }
};

template <typename S>
struct EncoderBlock {
  Tensor<S> ln1_g, ln1_b;
  AttentionParams<S> attn;
  Tensor<S> ln2_g, ln2_b;
  Tensor<S> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename S>
struct DecoderBlock {
  Tensor<S> ln1_g, ln1_b;
  AttentionParams<S> self_attn;
  Tensor<S> ln2_g, ln2_b;
  AttentionParams<S> cross_attn;
  Tensor<S> ln3_g, ln3_b;
  Tensor<S> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename S>
struct ModelParams {
  Tensor<S> enc_embed;   // V x d_model
  Tensor<S> dec_embed;   // V x (d_model - d_lang)
  Tensor<S> lang_embed;  // n_languages x d_lang
  std::vector<EncoderBlock<S>> enc;
  Tensor<S> enc_ln_g, enc_ln_b;
  std::vector<DecoderBlock<S>> dec;
  Tensor<S> dec_ln_g, dec_ln_b;
  Tensor<S> out_w;  // d_model x V
  Tensor<S> out_b;  // V

  static ModelParams init(const ModelConfig& cfg, Rng& rng);

  // Stable (name, tensor) listing; ordering is the serialization and
  // initialization order.
  std::vector<std::pair<std::string, Tensor<S>>> named() const;

  void set_requires_grad(bool b) {
    for (auto& nt : named()) nt.second.set_requires_grad(b);
  }
};

namespace detail {

template <typename S>
Tensor<S> init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor<S> w = Tensor<S>::zeros({fan_in, fan_out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.mutable_value())
    v = static_cast<S>((rng.uniform() * 2.0 - 1.0) * bound);
  return w;
}

template <typename S>
Tensor<S> init_embed(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor<S> w = Tensor<S>::zeros({rows, cols});
  const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
  for (auto& v : w.mutable_value()) v = static_cast<S>(rng.normal() * sd);
  return w;
}

template <typename S>
AttentionParams<S> init_attention(std::size_t d, Rng& rng) {
  AttentionParams<S> p;
  p.wq = init_linear<S>(d, d, rng);
  p.wk = init_linear<S>(d, d, rng);
  p.wv = init_linear<S>(d, d, rng);
  p.wo = init_linear<S>(d, d, rng);
  return p;
}

template <typename S>
Tensor<S> ones_vec(std::size_t d) {
  return Tensor<S>::full({d}, S(1));
}

}  // namespace detail

template <typename S>
ModelParams<S> ModelParams<S>::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams<S> p;
  const std::size_t d = cfg.d_model;
  p.enc_embed = detail::init_embed<S>(cfg.vocab_size, d, rng);
  p.dec_embed = detail::init_embed<S>(cfg.vocab_size, d - cfg.d_lang, rng);
  p.lang_embed = detail::init_embed<S>(cfg.n_languages, cfg.d_lang, rng);
  for (std::size_t l = 0; l < cfg.n_enc_layers; ++l) {
    EncoderBlock<S> b;
    b.ln1_g = detail::ones_vec<S>(d);
    b.ln1_b = Tensor<S>::zeros({d});
    b.attn = detail::init_attention<S>(d, rng);
    b.ln2_g = detail::ones_vec<S>(d);
    b.ln2_b = Tensor<S>::zeros({d});
    b.fc1_w = detail::init_linear<S>(d, cfg.d_fc, rng);
    b.fc1_b = Tensor<S>::zeros({cfg.d_fc});
    b.fc2_w = detail::init_linear<S>(cfg.d_fc, d, rng);
    b.fc2_b = Tensor<S>::zeros({d});
    p.enc.push_back(std::move(b));
  }
  p.enc_ln_g = detail::ones_vec<S>(d);
  p.enc_ln_b = Tensor<S>::zeros({d});
  for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
    DecoderBlock<S> b;
    b.ln1_g = detail::ones_vec<S>(d);
    b.ln1_b = Tensor<S>::zeros({d});
    b.self_attn = detail::init_attention<S>(d, rng);
    b.ln2_g = detail::ones_vec<S>(d);
    b.ln2_b = Tensor<S>::zeros({d});
    b.cross_attn = detail::init_attention<S>(d, rng);
    b.ln3_g = detail::ones_vec<S>(d);
    b.ln3_b = Tensor<S>::zeros({d});
    b.fc1_w = detail::init_linear<S>(d, cfg.d_fc, rng);
    b.fc1_b = Tensor<S>::zeros({cfg.d_fc});
    b.fc2_w = detail::init_linear<S>(cfg.d_fc, d, rng);
    b.fc2_b = Tensor<S>::zeros({d});
    p.dec.push_back(std::move(b));
  }
  p.dec_ln_g = detail::ones_vec<S>(d);
  p.dec_ln_b = Tensor<S>::zeros({d});
  p.out_w = detail::init_linear<S>(d, cfg.vocab_size, rng);
  p.out_b = Tensor<S>::zeros({cfg.vocab_size});
  return p;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>>> ModelParams<S>::named() const {
  std::vector<std::pair<std::string, Tensor<S>>> out;
  out.emplace_back("enc_embed", enc_embed);
  out.emplace_back("dec_embed", dec_embed);
  out.emplace_back("lang_embed", lang_embed);
  auto add_attn = [&out](const std::string& prefix,
                         const AttentionParams<S>& a) {
    out.emplace_back(prefix + ".wq", a.wq);
    out.emplace_back(prefix + ".wk", a.wk);
    out.emplace_back(prefix + ".wv", a.wv);
    out.emplace_back(prefix + ".wo", a.wo);
  };
  for (std::size_t l = 0; l < enc.size(); ++l) {
    const std::string p = "enc." + std::to_string(l);
    out.emplace_back(p + ".ln1_g", enc[l].ln1_g);
    out.emplace_back(p + ".ln1_b", enc[l].ln1_b);
    add_attn(p + ".attn", enc[l].attn);
    out.emplace_back(p + ".ln2_g", enc[l].ln2_g);
    out.emplace_back(p + ".ln2_b", enc[l].ln2_b);
    out.emplace_back(p + ".fc1_w", enc[l].fc1_w);
    out.emplace_back(p + ".fc1_b", enc[l].fc1_b);
    out.emplace_back(p + ".fc2_w", enc[l].fc2_w);
    out.emplace_back(p + ".fc2_b", enc[l].fc2_b);
  }
  out.emplace_back("enc_ln_g", enc_ln_g);
  out.emplace_back("enc_ln_b", enc_ln_b);
  for (std::size_t l = 0; l < dec.size(); ++l) {
    const std::string p = "dec." + std::to_string(l);
    out.emplace_back(p + ".ln1_g", dec[l].ln1_g);
    out.emplace_back(p + ".ln1_b", dec[l].ln1_b);
    add_attn(p + ".self_attn", dec[l].self_attn);
    out.emplace_back(p + ".ln2_g", dec[l].ln2_g);
    out.emplace_back(p + ".ln2_b", dec[l].ln2_b);
    add_attn(p + ".cross_attn", dec[l].cross_attn);
    out.emplace_back(p + ".ln3_g", dec[l].ln3_g);
    out.emplace_back(p + ".ln3_b", dec[l].ln3_b);
    out.emplace_back(p + ".fc1_w", dec[l].fc1_w);
    out.emplace_back(p + ".fc1_b", dec[l].fc1_b);
    out.emplace_back(p + ".fc2_w", dec[l].fc2_w);
    out.emplace_back(p + ".fc2_b", dec[l].fc2_b);
  }
  out.emplace_back("dec_ln_g", dec_ln_g);
  out.emplace_back("dec_ln_b", dec_ln_b);
  out.emplace_back("out_w", out_w);
  out.emplace_back("out_b", out_b);
  return out;
}

// Right-padded id batch (row-major n x t) with per-row valid lengths.
struct TokenBatch {
  std::vector<int> ids;
  std::size_t n = 0, t = 0;
  std::vector<std::size_t> lengths;

  int at(std::size_t row, std::size_t col) const { return ids[row * t + col]; }
};

template <typename S>
Tensor<S> sinusoidal_positions(std::size_t t, std::size_t d) {
  Tensor<S> pe = Tensor<S>::zeros({t, d});
  for (std::size_t pos = 0; pos < t; ++pos) {
    for (std::size_t c = 0; c < d; ++c) {
      const double exponent = -2.0 * static_cast<double>(c / 2) /
                              static_cast<double>(d);
      const double angle =
          static_cast<double>(pos) * std::pow(10000.0, exponent);
      pe.mutable_value()[pos * d + c] =
          static_cast<S>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

namespace detail {

// Positions tiled per sentence: row i*t + k holds position k's encoding.
template <typename S>
Tensor<S> tiled_positions(std::size_t n, std::size_t t, std::size_t d) {
  Tensor<S> one = sinusoidal_positions<S>(t, d);
  Tensor<S> tiled = Tensor<S>::zeros({n * t, d});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(one.value().begin(), one.value().end(),
              tiled.mutable_value().data() + i * t * d);
  return tiled;
}

// Pre-LN feed-forward sub-block with residual: x + W2(drop(relu(W1 ln(x)))).
template <typename S>
Tensor<S> ffn_block(const Tensor<S>& x, const Tensor<S>& ln_g,
                    const Tensor<S>& ln_b, const Tensor<S>& fc1_w,
                    const Tensor<S>& fc1_b, const Tensor<S>& fc2_w,
                    const Tensor<S>& fc2_b, double dropout_p, Rng* rng,
                    bool train) {
  Tensor<S> h = layer_norm(x, ln_g, ln_b, S(1e-5));
  h = relu(affine(h, fc1_w, fc1_b));
  if (train && dropout_p > 0.0) h = dropout(h, dropout_p, *rng, true);
  h = affine(h, fc2_w, fc2_b);
  return add(x, h);
}

// Runs self-attention on each sentence's valid rows of a flat (n*t) x d
// matrix and scatters results back, zero on padding rows.
template <typename S>
Tensor<S> self_attention_flat(const Tensor<S>& ln_x, const TokenBatch& batch,
                              const AttentionParams<S>& attn,
                              std::size_t n_heads, bool causal,
                              double attn_dropout_p, Rng* rng, bool train) {
  std::vector<Tensor<S>> pieces;
  const std::size_t d = ln_x.cols();
  for (std::size_t i = 0; i < batch.n; ++i) {
    const std::size_t len = batch.lengths[i];
    Tensor<S> x_i = block_rows(ln_x, i * batch.t, i * batch.t + len);
    if (causal) {
      AttnMask m = AttnMask::causal(len);
      pieces.push_back(multi_head_attention(x_i, x_i, &m, attn, n_heads,
                                            attn_dropout_p, rng, train));
    } else {
      pieces.push_back(multi_head_attention(x_i, x_i, nullptr, attn, n_heads,
                                            attn_dropout_p, rng, train));
    }
    if (len < batch.t) pieces.push_back(Tensor<S>::zeros({batch.t - len, d}));
  }
  return concat_rows(pieces);
}

}  // namespace detail

template <typename S>
struct EncodeResult {
  Tensor<S> h_flat;  // (n*t) x d_model final hidden states
  Tensor<S> p;       // n x d_model sentence embeddings (row 0 of each H)
  std::size_t n = 0, t = 0;
};

// Encoder forward. Inputs must be framed [STR_TAG, tokens..., EOS] and
// right-padded; no language information enters here.
template <typename S>
EncodeResult<S> encode_batch(const TokenBatch& batch, const ModelConfig& cfg,
                             const ModelParams<S>& params, Rng* rng = nullptr,
                             bool train = false) {
  if (batch.n == 0 || batch.t == 0 || batch.lengths.size() != batch.n) {
    throw DataError("encode: empty or inconsistent batch");
  }
  if (batch.t > cfg.max_positions) {
    throw DataError("encode: sequence length " + std::to_string(batch.t) +
                    " exceeds max_positions " +
                    std::to_string(cfg.max_positions));
  }
  for (std::size_t i = 0; i < batch.n; ++i) {
    const std::size_t len = batch.lengths[i];
    if (len < 2 || batch.at(i, 0) != Vocabulary::kStrTag ||
        batch.at(i, len - 1) != Vocabulary::kEos) {
      throw DataError("encode: row " + std::to_string(i) +
                      " is not framed as [STR_TAG, ..., EOS]");
    }
  }
  if (train && cfg.dropout_p > 0.0 && !rng) {
    throw DataError("encode: training with dropout needs an rng");
  }
  const std::size_t n = batch.n, t = batch.t, d = cfg.d_model;

  Tensor<S> x = gather_rows(params.enc_embed, batch.ids);
  x = scale(x, static_cast<S>(std::sqrt(static_cast<double>(d))));
  x = add(x, detail::tiled_positions<S>(n, t, d));
  if (train && cfg.dropout_p > 0.0) x = dropout(x, cfg.dropout_p, *rng, true);

  const std::size_t last = cfg.n_enc_layers - 1;
  for (std::size_t l = 0; l < cfg.n_enc_layers; ++l) {
    const EncoderBlock<S>& blk = params.enc[l];
    const bool lazy = cfg.lazy_final_layer && l == last;
    Tensor<S> ln_x = layer_norm(x, blk.ln1_g, blk.ln1_b, S(1e-5));
    if (!lazy) {
      Tensor<S> attn = detail::self_attention_flat(
          ln_x, batch, blk.attn, cfg.n_heads, /*causal=*/false, cfg.dropout_p,
          rng, train);
      x = add(x, attn);
      x = detail::ffn_block(x, blk.ln2_g, blk.ln2_b, blk.fc1_w, blk.fc1_b,
                            blk.fc2_w, blk.fc2_b, cfg.dropout_p, rng, train);
    } else {
      // Only position 0 of each sentence is needed from the final layer.
      std::vector<Tensor<S>> rows;
      for (std::size_t i = 0; i < n; ++i) {
        Tensor<S> q = block_rows(ln_x, i * t, i * t + 1);
        Tensor<S> kv = block_rows(ln_x, i * t, i * t + batch.lengths[i]);
        rows.push_back(multi_head_attention(q, kv, nullptr, blk.attn,
                                            cfg.n_heads, cfg.dropout_p, rng,
                                            train));
      }
      std::vector<Tensor<S>> picks;
      for (std::size_t i = 0; i < n; ++i)
        picks.push_back(block_rows(x, i * t, i * t + 1));
      Tensor<S> x0 = add(concat_rows(picks), concat_rows(rows));
      x0 = detail::ffn_block(x0, blk.ln2_g, blk.ln2_b, blk.fc1_w, blk.fc1_b,
                             blk.fc2_w, blk.fc2_b, cfg.dropout_p, rng, train);
      Tensor<S> p = layer_norm(x0, params.enc_ln_g, params.enc_ln_b, S(1e-5));
      EncodeResult<S> result;
      result.p = p;
      result.n = n;
      result.t = t;
      return result;
    }
  }
  Tensor<S> h = layer_norm(x, params.enc_ln_g, params.enc_ln_b, S(1e-5));
  std::vector<int> firsts(n);
  for (std::size_t i = 0; i < n; ++i) firsts[i] = static_cast<int>(i * t);
  EncodeResult<S> result;
  result.h_flat = h;
  result.p = gather_rows(h, firsts);
  result.n = n;
  result.t = t;
  return result;
}

// Decoder forward with teacher forcing. g holds EOS-fronted previous target
// tokens; p holds one sentence embedding per row. Returns flat logits
// ((n*t) x V).
template <typename S>
Tensor<S> decode_batch(const TokenBatch& g, int lang_id, const Tensor<S>& p,
                       const ModelConfig& cfg, const ModelParams<S>& params,
                       Rng* rng = nullptr, bool train = false) {
  if (g.n == 0 || g.t == 0 || g.lengths.size() != g.n) {
    throw DataError("decode: empty or inconsistent batch");
  }
  if (p.rank() != 2 || p.rows() != g.n || p.cols() != cfg.d_model) {
    throw ShapeError("decode: embeddings " + shape_str(p.shape()) +
                     " do not match batch of " + std::to_string(g.n));
  }
  if (lang_id < 0 || static_cast<std::size_t>(lang_id) >= cfg.n_languages) {
    throw DataError("decode: language id " + std::to_string(lang_id) +
                    " outside table of " + std::to_string(cfg.n_languages));
  }
  if (g.t > cfg.max_positions) {
    throw DataError("decode: sequence length " + std::to_string(g.t) +
                    " exceeds max_positions " +
                    std::to_string(cfg.max_positions));
  }
  for (std::size_t i = 0; i < g.n; ++i) {
    if (g.lengths[i] < 1 || g.at(i, 0) != Vocabulary::kEos) {
      throw DataError("decode: row " + std::to_string(i) +
                      " of G is not EOS-fronted");
    }
  }
  if (train && cfg.dropout_p > 0.0 && !rng) {
    throw DataError("decode: training with dropout needs an rng");
  }
  const std::size_t n = g.n, t = g.t, d = cfg.d_model;

  Tensor<S> tok = gather_rows(params.dec_embed, g.ids);
  Tensor<S> lang_row = gather_rows(params.lang_embed, {lang_id});
  Tensor<S> lang_tile = broadcast_row(lang_row, n * t);
  Tensor<S> x = concat_cols(tok, lang_tile);
  x = add(x, detail::tiled_positions<S>(n, t, d));
  if (train && cfg.dropout_p > 0.0) x = dropout(x, cfg.dropout_p, *rng, true);

  for (std::size_t l = 0; l < cfg.n_dec_layers; ++l) {
    const DecoderBlock<S>& blk = params.dec[l];
    Tensor<S> ln_x = layer_norm(x, blk.ln1_g, blk.ln1_b, S(1e-5));
    Tensor<S> attn = detail::self_attention_flat(
        ln_x, g, blk.self_attn, cfg.n_heads, /*causal=*/true, cfg.dropout_p,
        rng, train);
    x = add(x, attn);

    Tensor<S> ln_c = layer_norm(x, blk.ln2_g, blk.ln2_b, S(1e-5));
    std::vector<Tensor<S>> pieces;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = g.lengths[i];
      Tensor<S> q = block_rows(ln_c, i * t, i * t + len);
      Tensor<S> kv = block_rows(p, i, i + 1);
      pieces.push_back(multi_head_attention(q, kv, nullptr, blk.cross_attn,
                                            cfg.n_heads, cfg.dropout_p, rng,
                                            train));
      if (len < t) pieces.push_back(Tensor<S>::zeros({t - len, d}));
    }
    x = add(x, concat_rows(pieces));

    x = detail::ffn_block(x, blk.ln3_g, blk.ln3_b, blk.fc1_w, blk.fc1_b,
                          blk.fc2_w, blk.fc2_b, cfg.dropout_p, rng, train);
  }
  Tensor<S> h = layer_norm(x, params.dec_ln_g, params.dec_ln_b, S(1e-5));
  return affine(h, params.out_w, params.out_b);
}

// Teacher-forced translation of one direction: encode src, decode tgt.
// Returns (flat logits, source sentence embeddings).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> translate_forward(
    const TokenBatch& src, const TokenBatch& tgt_g, int tgt_lang,
    const ModelConfig& cfg, const ModelParams<S>& params, Rng* rng = nullptr,
    bool train = false) {
  if (src.n != tgt_g.n) {
    throw DataError("translate_forward: " + std::to_string(src.n) +
                    " source rows vs " + std::to_string(tgt_g.n) + " target");
  }
  EncodeResult<S> enc = encode_batch(src, cfg, params, rng, train);
  Tensor<S> logits = decode_batch(tgt_g, tgt_lang, enc.p, cfg, params, rng, train);
  return {logits, enc.p};
}

// Greedy autoregressive decoding from one sentence embedding. Returns
// generated token ids up to (excluding) EOS.
template <typename S>
std::vector<int> greedy_decode(const Tensor<S>& p_row, int lang_id,
                               std::size_t max_len, const ModelConfig& cfg,
                               const ModelParams<S>& params) {
  if (max_len < 1) throw DataError("greedy_decode: max_len must be >= 1");
  Tensor<S> p = p_row.rank() == 1 ? reshape(p_row, {1, p_row.shape()[0]})
                                  : p_row;
  std::vector<int> generated;
  for (std::size_t step = 0; step < max_len; ++step) {
    TokenBatch g;
    g.n = 1;
    g.t = generated.size() + 1;
    g.ids.push_back(Vocabulary::kEos);
    for (int id : generated) g.ids.push_back(id);
    g.lengths = {g.t};
    Tensor<S> logits = decode_batch(g, lang_id, p, cfg, params);
    const std::size_t v = cfg.vocab_size;
    const S* row = logits.value().data() + (g.t - 1) * v;
    int best = 0;
    for (std::size_t c = 1; c < v; ++c)
      if (row[c] > row[best]) best = static_cast<int>(c);
    if (best == Vocabulary::kEos) break;
    generated.push_back(best);
  }
  return generated;
}

}  // namespace xlemb
