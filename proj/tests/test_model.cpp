#include "doctest.h"

#include <cmath>

#include "xlemb/grad_check.hpp"
#include "xlemb/model.hpp"

using namespace xlemb;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_fc = 16;
  cfg.n_enc_layers = 2;
  cfg.n_dec_layers = 1;
  cfg.vocab_size = 20;
  cfg.n_languages = 3;
  cfg.d_lang = 2;
  cfg.max_positions = 32;
  cfg.dropout_p = 0.0;
  return cfg;
}

TokenBatch make_batch(const std::vector<std::vector<int>>& rows) {
  TokenBatch b;
  b.n = rows.size();
  for (const auto& r : rows) b.t = std::max(b.t, r.size());
  for (const auto& r : rows) {
    b.lengths.push_back(r.size());
    for (std::size_t i = 0; i < b.t; ++i)
      b.ids.push_back(i < r.size() ? r[i] : Vocabulary::kPad);
  }
  return b;
}

TokenBatch framed(const std::vector<std::vector<int>>& token_rows) {
  std::vector<std::vector<int>> rows;
  for (const auto& r : token_rows) {
    std::vector<int> row = {Vocabulary::kStrTag};
    row.insert(row.end(), r.begin(), r.end());
    row.push_back(Vocabulary::kEos);
    rows.push_back(row);
  }
  return make_batch(rows);
}

TokenBatch eos_fronted(const std::vector<std::vector<int>>& token_rows) {
  std::vector<std::vector<int>> rows;
  for (const auto& r : token_rows) {
    std::vector<int> row = {Vocabulary::kEos};
    row.insert(row.end(), r.begin(), r.end());
    rows.push_back(row);
  }
  return make_batch(rows);
}

TensorD random_mat(std::size_t r, std::size_t c, Rng& rng) {
  TensorD t = TensorD::zeros({r, c});
  for (auto& v : t.mutable_value()) v = rng.normal() * 0.5;
  return t;
}

AttentionParams<double> random_attn(std::size_t d, Rng& rng) {
  AttentionParams<double> p;
  p.wq = random_mat(d, d, rng);
  p.wk = random_mat(d, d, rng);
  p.wv = random_mat(d, d, rng);
  p.wo = random_mat(d, d, rng);
  return p;
}

}  // namespace

TEST_CASE("attention hand example single position") {
  AttentionParams<double> p;
  p.wq = TensorD::from_data({2, 2}, {1, 2, 3, 4});
  p.wk = TensorD::from_data({2, 2}, {5, 6, 7, 8});
  p.wv = TensorD::from_data({2, 2}, {1, 0, 0, 1});
  p.wo = TensorD::from_data({2, 2}, {2, 0, 0, 3});
  TensorD q = TensorD::from_data({1, 2}, {1, 0});
  TensorD out = multi_head_attention(q, q, nullptr, p, 1);
  // Single key: softmax = 1, so out = (v Wv) Wo = (1,0)Wv Wo = (2, 0).
  CHECK(out.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("attention single key ignores the query") {
  Rng rng(101);
  AttentionParams<double> p = random_attn(6, rng);
  TensorD kv = random_mat(1, 6, rng);
  TensorD q1 = random_mat(4, 6, rng);
  TensorD q2 = random_mat(4, 6, rng);
  TensorD o1 = multi_head_attention(q1, kv, nullptr, p, 2);
  TensorD o2 = multi_head_attention(q2, kv, nullptr, p, 2);
  for (std::size_t i = 0; i < o1.size(); ++i)
    CHECK(o1.value()[i] == o2.value()[i]);
}

TEST_CASE("attention with zero key projection averages values") {
  Rng rng(102);
  AttentionParams<double> p = random_attn(4, rng);
  p.wk = TensorD::zeros({4, 4});  // all scores equal -> uniform weights
  p.wo = TensorD::from_data({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0,
                                     0, 0, 1, 0, 0, 0, 0, 1});
  TensorD kv = random_mat(3, 4, rng);
  TensorD q = random_mat(2, 4, rng);
  TensorD out = multi_head_attention(q, kv, nullptr, p, 1);
  // Expected: column means of kv projected by Wv.
  TensorD vproj = matmul(kv, p.wv);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = (vproj.at(0, c) + vproj.at(1, c) + vproj.at(2, c)) / 3.0;
    CHECK(out.at(0, c) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(out.at(1, c) == doctest::Approx(mean).epsilon(1e-9));
  }
}

TEST_CASE("attention rejects bad shapes and masks") {
  Rng rng(103);
  AttentionParams<double> p = random_attn(4, rng);
  TensorD q = random_mat(2, 4, rng);
  CHECK_THROWS_AS(multi_head_attention(q, random_mat(2, 6, rng), nullptr, p, 2),
                  ShapeError);
  CHECK_THROWS_AS(multi_head_attention(q, q, nullptr, p, 3), ShapeError);
  AttnMask wrong = AttnMask::causal(3);
  CHECK_THROWS_AS(multi_head_attention(q, q, &wrong, p, 2), ShapeError);
  AttnMask empty_row = AttnMask::key_prefix(2, 2, 0);
  CHECK_THROWS_AS(multi_head_attention(q, q, &empty_row, p, 2), DataError);
}

TEST_CASE("attention gradients") {
  Rng rng(104);
  AttentionParams<double> p = random_attn(4, rng);
  p.wq.set_requires_grad(true);
  p.wk.set_requires_grad(true);
  p.wv.set_requires_grad(true);
  p.wo.set_requires_grad(true);
  TensorD q = random_mat(3, 4, rng).set_requires_grad(true);
  TensorD kv = random_mat(3, 4, rng).set_requires_grad(true);
  SUBCASE("unmasked cross attention") {
    auto f = [&]() { return sum_sq(multi_head_attention(q, kv, nullptr, p, 2)); };
    GradCheckReport rep =
        grad_check(f, {{"q", q}, {"kv", kv}, {"wq", p.wq}, {"wk", p.wk},
                       {"wv", p.wv}, {"wo", p.wo}},
                   1e-5, 1e-4);
    INFO(rep.summary());
    CHECK(rep.pass);
  }
  SUBCASE("causal self attention") {
    AttnMask m = AttnMask::causal(3);
    auto f = [&]() { return sum_sq(multi_head_attention(q, q, &m, p, 2)); };
    GradCheckReport rep = grad_check(
        f, {{"q", q}, {"wq", p.wq}, {"wv", p.wv}, {"wo", p.wo}}, 1e-5, 1e-4);
    INFO(rep.summary());
    CHECK(rep.pass);
  }
}

TEST_CASE("sinusoidal positions basics") {
  TensorD pe = sinusoidal_positions<double>(4, 6);
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(pe.at(0, c) == doctest::Approx(c % 2 == 0 ? 0.0 : 1.0));
  }
  CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe.at(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
}

TEST_CASE("encoder pooling and determinism") {
  ModelConfig cfg = toy_config();
  Rng rng(7);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch b = framed({{5, 6, 7}, {5, 6, 7}, {9, 10, 11, 12}});
  EncodeResult<double> r = encode_batch(b, cfg, params);

  // P is row 0 of each sentence's final hidden states, bitwise.
  for (std::size_t i = 0; i < b.n; ++i) {
    for (std::size_t c = 0; c < cfg.d_model; ++c) {
      CHECK(r.p.at(i, c) == r.h_flat.at(i * b.t, c));
    }
  }
  // Identical sentences embed identically, bitwise.
  for (std::size_t c = 0; c < cfg.d_model; ++c) {
    CHECK(r.p.at(0, c) == r.p.at(1, c));
  }
  // Rerun is bitwise identical.
  EncodeResult<double> r2 = encode_batch(b, cfg, params);
  CHECK(r.p.value() == r2.p.value());
}

TEST_CASE("encoder padding invariance") {
  ModelConfig cfg = toy_config();
  Rng rng(8);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch tight = framed({{5, 6, 7}});
  TokenBatch padded = tight;
  padded.t += 3;
  padded.ids = {tight.ids};
  padded.ids.resize(padded.t, Vocabulary::kPad);
  EncodeResult<double> a = encode_batch(tight, cfg, params);
  EncodeResult<double> b = encode_batch(padded, cfg, params);
  for (std::size_t c = 0; c < cfg.d_model; ++c) {
    CHECK(std::abs(a.p.at(0, c) - b.p.at(0, c)) < 1e-6);
  }
}

TEST_CASE("encoder framing and length validation") {
  ModelConfig cfg = toy_config();
  Rng rng(9);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch missing_tag = make_batch({{5, 6, Vocabulary::kEos}});
  CHECK_THROWS_AS(encode_batch(missing_tag, cfg, params), DataError);
  TokenBatch missing_eos = make_batch({{Vocabulary::kStrTag, 5, 6}});
  CHECK_THROWS_AS(encode_batch(missing_eos, cfg, params), DataError);
  std::vector<int> longrow(cfg.max_positions + 1, 5);
  longrow.front() = Vocabulary::kStrTag;
  longrow.back() = Vocabulary::kEos;
  TokenBatch toolong = make_batch({longrow});
  CHECK_THROWS_AS(encode_batch(toolong, cfg, params), DataError);
}

TEST_CASE("lazy final layer matches full computation") {
  ModelConfig cfg = toy_config();
  Rng rng(10);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch b = framed({{5, 6, 7, 8}, {9, 10}, {11, 12, 13}});
  EncodeResult<double> full = encode_batch(b, cfg, params);
  ModelConfig lazy_cfg = cfg;
  lazy_cfg.lazy_final_layer = true;
  EncodeResult<double> lazy = encode_batch(b, lazy_cfg, params);
  REQUIRE(lazy.p.rows() == full.p.rows());
  for (std::size_t i = 0; i < full.p.size(); ++i) {
    CHECK(std::abs(full.p.value()[i] - lazy.p.value()[i]) < 1e-6);
  }
}

TEST_CASE("decoder causal masking is exact") {
  ModelConfig cfg = toy_config();
  Rng rng(11);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch src = framed({{5, 6, 7}});
  EncodeResult<double> enc = encode_batch(src, cfg, params);

  TokenBatch g1 = eos_fronted({{8, 9, 10, 11}});
  TokenBatch g2 = eos_fronted({{8, 9, 17, 18}});  // change strictly after t=1
  TensorD l1 = decode_batch(g1, 0, enc.p, cfg, params);
  TensorD l2 = decode_batch(g2, 0, enc.p, cfg, params);
  for (std::size_t pos = 0; pos < 2; ++pos) {  // positions 0 and 1 see same G
    for (std::size_t c = 0; c < cfg.vocab_size; ++c) {
      CHECK(l1.at(pos, c) == l2.at(pos, c));
    }
  }
}

TEST_CASE("decoder language embedding matters") {
  ModelConfig cfg = toy_config();
  Rng rng(12);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch src = framed({{5, 6}});
  EncodeResult<double> enc = encode_batch(src, cfg, params);
  TokenBatch g = eos_fronted({{8, 9}});
  TensorD l0 = decode_batch(g, 0, enc.p, cfg, params);
  TensorD l1 = decode_batch(g, 1, enc.p, cfg, params);
  double diff = 0;
  for (std::size_t i = 0; i < l0.size(); ++i)
    diff = std::max(diff, std::abs(l0.value()[i] - l1.value()[i]));
  CHECK(diff > 1e-8);
}

TEST_CASE("decoder input validation") {
  ModelConfig cfg = toy_config();
  Rng rng(13);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch src = framed({{5, 6}});
  EncodeResult<double> enc = encode_batch(src, cfg, params);
  TokenBatch not_fronted = make_batch({{8, 9}});
  CHECK_THROWS_AS(decode_batch(not_fronted, 0, enc.p, cfg, params), DataError);
  TokenBatch g = eos_fronted({{8, 9}});
  CHECK_THROWS_AS(decode_batch(g, 7, enc.p, cfg, params), DataError);
  CHECK_THROWS_AS(decode_batch(g, -1, enc.p, cfg, params), DataError);
}

TEST_CASE("translate_forward shapes and determinism") {
  ModelConfig cfg = toy_config();
  Rng rng(14);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch src = framed({{5, 6, 7}});
  TokenBatch g = eos_fronted({{8, 9}});
  auto [logits, p] = translate_forward(src, g, 1, cfg, params);
  CHECK(logits.rows() == g.t);
  CHECK(logits.cols() == cfg.vocab_size);
  CHECK(p.rows() == 1);
  CHECK(p.cols() == cfg.d_model);

  auto [logits2, p2] = translate_forward(src, g, 1, cfg, params);
  CHECK(logits.value() == logits2.value());
  CHECK(p.value() == p2.value());

  TokenBatch g2 = eos_fronted({{8}, {9}});
  CHECK_THROWS_AS(translate_forward(src, g2, 1, cfg, params), DataError);
}

TEST_CASE("zero output projection gives uniform logits") {
  ModelConfig cfg = toy_config();
  Rng rng(15);
  auto params = ModelParams<double>::init(cfg, rng);
  params.out_w = TensorD::zeros({cfg.d_model, cfg.vocab_size});
  params.out_b = TensorD::zeros({cfg.vocab_size});
  TokenBatch src = framed({{5, 6}});
  TokenBatch g = eos_fronted({{8, 9}});
  auto [logits, p] = translate_forward(src, g, 0, cfg, params);
  for (double v : logits.value()) CHECK(v == 0.0);
}

TEST_CASE("greedy decode basics") {
  ModelConfig cfg = toy_config();
  Rng rng(16);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch src = framed({{5, 6, 7}});
  EncodeResult<double> enc = encode_batch(src, cfg, params);
  TensorD p_row = TensorD::from_data({static_cast<std::size_t>(cfg.d_model)},
                                     enc.p.value());

  std::vector<int> one = greedy_decode(p_row, 0, 1, cfg, params);
  CHECK(one.size() <= 1);
  std::vector<int> a = greedy_decode(p_row, 0, 8, cfg, params);
  std::vector<int> b = greedy_decode(p_row, 0, 8, cfg, params);
  CHECK(a == b);
  CHECK(a.size() <= 8);
  CHECK_THROWS_AS(greedy_decode(p_row, 0, 0, cfg, params), DataError);
}

TEST_CASE("model gradient flow reaches every live parameter") {
  ModelConfig cfg = toy_config();
  Rng rng(17);
  auto params = ModelParams<double>::init(cfg, rng);
  params.set_requires_grad(true);
  TokenBatch src = framed({{5, 6, 7}, {9, 10}});
  TokenBatch g = eos_fronted({{8, 9}, {11, 12, 13}});

  Tape<double> tape;
  auto [logits, p] = translate_forward(src, g, 2, cfg, params);
  TensorD loss = add(mean_all(logits), mean_all(p));
  tape.backward(loss);

  auto grad_norm = [](const TensorD& t) {
    double s = 0;
    for (double v : t.grad()) s += v * v;
    return std::sqrt(s);
  };
  for (const auto& [name, t] : params.named()) {
    // A single key/value position makes cross-attention weights constant
    // (softmax over one element), so its query/key projections — and the
    // layer norm that only feeds that query — cannot receive gradient.
    // Assert the structural zeros instead.
    const bool structurally_zero =
        name.find("cross_attn.wq") != std::string::npos ||
        name.find("cross_attn.wk") != std::string::npos ||
        (name.find("dec.") == 0 && name.find(".ln2_") != std::string::npos);
    INFO(name);
    if (structurally_zero) {
      CHECK(grad_norm(t) == 0.0);
    } else {
      CHECK(grad_norm(t) > 0.0);
    }
  }
  // The sentence-start marker's embedding row specifically receives signal.
  double str_row = 0;
  for (std::size_t c = 0; c < cfg.d_model; ++c) {
    double v = params.enc_embed.grad()[Vocabulary::kStrTag * cfg.d_model + c];
    str_row += v * v;
  }
  CHECK(str_row > 0.0);
}

TEST_CASE("model config validation") {
  ModelConfig cfg = toy_config();
  cfg.d_model = 10;  // not divisible by 4 heads
  cfg.n_heads = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.d_lang = cfg.d_model;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config();
  cfg.vocab_size = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(toy_config().validate());
}

TEST_CASE("dropout changes activations but stays seed deterministic") {
  ModelConfig cfg = toy_config();
  cfg.dropout_p = 0.2;
  Rng rng(18);
  auto params = ModelParams<double>::init(cfg, rng);
  TokenBatch src = framed({{5, 6, 7}});
  Rng d1(99), d2(99), d3(100);
  EncodeResult<double> a = encode_batch(src, cfg, params, &d1, true);
  EncodeResult<double> b = encode_batch(src, cfg, params, &d2, true);
  EncodeResult<double> c = encode_batch(src, cfg, params, &d3, true);
  CHECK(a.p.value() == b.p.value());
  CHECK(a.p.value() != c.p.value());
  CHECK_THROWS_AS(encode_batch(src, cfg, params, nullptr, true), DataError);
}
