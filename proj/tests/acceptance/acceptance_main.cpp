// End-to-end acceptance suite. Each criterion prints one PASS/FAIL verdict
// line; the exit code is the number of failed criteria. Criteria can be
// selected by number on the command line, e.g. `acceptance 1 4 7`.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "xlemb/attention.hpp"
#include "xlemb/checkpoint.hpp"
#include "xlemb/config.hpp"
#include "xlemb/data.hpp"
#include "xlemb/eval.hpp"
#include "xlemb/grad_suite.hpp"
#include "xlemb/losses.hpp"
#include "xlemb/model.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/synth.hpp"
#include "xlemb/tokenizer.hpp"
#include "xlemb/trainer.hpp"

namespace {

using namespace xlemb;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(prec) << x;
  return ss.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Shared workspace: corpora, vocabularies, split cache. Built lazily so a
// criterion subset only pays for what it touches; removed at process exit.

struct Workspace {
  fs::path root;
  std::map<std::string, ParallelCorpus> split_cache;
  std::string multi_dir, bi_dir;
  Vocabulary multi_vocab, bi_vocab;
  bool has_multi = false, has_bi = false;

  Workspace() {
    root = fs::temp_directory_path() /
           ("xlemb_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(root);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }

  const ParallelCorpus& split(const std::string& dir, const std::string& name) {
    const std::string key = dir + "#" + name;
    auto it = split_cache.find(key);
    if (it == split_cache.end())
      it = split_cache.emplace(key, load_split(dir, name)).first;
    return it->second;
  }

  static std::vector<std::string> all_lines(const ParallelCorpus& c) {
    std::vector<std::string> lines;
    for (const auto& lang : c.languages) {
      const auto& ls = c.lines(lang);
      lines.insert(lines.end(), ls.begin(), ls.end());
    }
    return lines;
  }

  void ensure_multi() {
    if (has_multi) return;
    SynthSpec spec;  // 4 languages, 2000/200/400 sentences
    spec.seed = 1301;
    multi_dir = (root / "multi").string();
    generate_corpus(spec, multi_dir);
    multi_vocab = learn_bpe(all_lines(split(multi_dir, "train")), 400);
    has_multi = true;
  }

  void ensure_bi() {
    if (has_bi) return;
    SynthSpec spec;
    spec.n_languages = 2;
    spec.seed = 1302;
    bi_dir = (root / "bi").string();
    generate_corpus(spec, bi_dir);
    bi_vocab = learn_bpe(all_lines(split(bi_dir, "train")), 300);
    has_bi = true;
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

// Desk-scale model used by the training-based criteria.
ModelConfig desk_model() {
  ModelConfig cfg;
  cfg.d_model = 48;
  cfg.n_heads = 4;
  cfg.d_fc = 96;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_lang = 8;
  cfg.max_positions = 128;
  cfg.vocab_size = 0;     // derive from vocabulary
  cfg.n_languages = 0;    // derive from corpus
  return cfg;
}

TrainSettings desk_train(std::uint64_t seed, std::size_t epochs,
                         std::size_t max_tokens) {
  TrainSettings t;
  t.base_lr = 1e-3;
  t.warmup_steps = 200;
  t.dropout_p = 0.1;
  t.weight_decay = 1e-4;
  t.max_tokens = max_tokens;
  t.n_epochs = epochs;
  t.seed = seed;
  return t;
}

LossConfig system_loss(bool constrained) {
  LossConfig l;  // alpha 0.5, epsilon 1e-6, label smoothing 0.1
  if (constrained) {
    l.beta = 0.25;
    l.lambda = 0.125;
    l.n_neg = 5;
  } else {
    l.beta = 0.0;
    l.lambda = 0.0;
  }
  return l;
}

struct SystemScores {
  double dp = 0.0, retrieval = 0.0, cross = 0.0;
  std::size_t steps = 0;
};

// Trains one system on a corpus and scores it: paired distance and
// translation retrieval on the test split, zero-shot cross accuracy from
// per-language classifiers.
SystemScores run_system(const std::string& corpus_dir, const Vocabulary& vocab,
                        std::uint64_t seed, bool constrained, bool bilingual,
                        std::size_t epochs, std::size_t max_tokens,
                        const std::string& tag) {
  TrainJob job;
  job.model = desk_model();
  job.train = desk_train(seed, epochs, max_tokens);
  job.loss = system_loss(constrained);
  job.bilingual = bilingual;
  const std::string out = (ws().root / tag).string();
  TrainResult res =
      train(job, ws().split(corpus_dir, "train"), vocab, out);

  Checkpoint ckpt = load_checkpoint(res.final_checkpoint);
  DistanceReport dist =
      paired_distance_report(ckpt, ws().split(corpus_dir, "test"), 1e-6);
  SystemScores s;
  for (const auto& p : dist.pairs) s.dp += p.mean_d_p;
  s.dp /= static_cast<double>(dist.pairs.size());
  s.retrieval = dist.mean_retrieval;
  s.steps = res.steps;

  EvalSettings es;  // hidden 64, 30 epochs, batch 32, lr 1e-3
  es.seed = 2026;
  const std::vector<std::string> languages =
      ws().split(corpus_dir, "train").languages;
  DatasetAccessor accessor = [&](const std::string& lang,
                                 const std::string& split) {
    const ParallelCorpus& c = ws().split(corpus_dir, split);
    return SplitDocs{c.lines(lang), c.labels};
  };
  AccuracyMatrix acc = zero_shot_matrix(ckpt, languages, accessor, es);
  require(acc.cross.has_value(), tag + ": cross aggregate missing");
  s.cross = *acc.cross;
  return s;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite over the full objective on the toy model.

void criterion_gradients(std::ostream& log) {
  ObjectiveCheckSpec spec;
  spec.model.d_model = 16;
  spec.model.n_heads = 2;
  spec.model.d_fc = 32;
  spec.model.n_enc_layers = 2;
  spec.model.n_dec_layers = 1;
  spec.model.vocab_size = 50;
  spec.model.n_languages = 2;
  spec.model.d_lang = 4;
  spec.model.max_positions = 32;
  spec.seed = 20260823;
  spec.n_pairs = 2;
  spec.n_neg = 1;
  spec.step = 1e-5;
  spec.rel_tol = 1e-3;

  const auto t0 = Clock::now();
  GradCheckReport report = check_objective_gradients(spec);
  const double secs =
      std::chrono::duration<double>(Clock::now() - t0).count();
  log << "    " << report.params.size() << " parameter tensors, max relative "
      << "error " << report.max_rel_err << ", " << fmt(secs, 1) << " s\n";
  if (!report.pass) log << report.summary();
  require(report.pass, "gradient mismatch, max relative error " +
                           std::to_string(report.max_rel_err));
  require(secs < 60.0, "runtime " + fmt(secs, 1) + " s exceeds 60 s");
}

// ---------------------------------------------------------------------------
// 2. Aggregation oracle on the published 5x5 accuracy grid.

void criterion_aggregation(std::ostream& log) {
  const std::vector<std::string> langs = {"en", "de", "fr", "es", "it"};
  const std::vector<std::vector<double>> cells = {
      {.894, .868, .707, .714, .687},
      {.790, .930, .784, .766, .700},
      {.782, .869, .885, .717, .649},
      {.745, .827, .743, .916, .719},
      {.760, .797, .688, .733, .835}};
  AccuracyMatrix acc = aggregate_accuracy(langs, cells);
  require(acc.cross.has_value(), "cross aggregate missing");

  auto one_decimal = [&](double got, double want, const std::string& name) {
    require(std::abs(got * 100.0 - want) <= 0.051,
            name + " = " + fmt(got * 100.0, 3) + ", expected " + fmt(want, 1));
  };
  one_decimal(*acc.cross, 75.2, "cross");
  one_decimal(acc.same, 89.2, "same");
  one_decimal(acc.all, 78.0, "all");
  const std::vector<double> x_cross = {74.4, 76.0, 75.4, 75.8, 74.4};
  for (std::size_t i = 0; i < x_cross.size(); ++i) {
    one_decimal(acc.x_cross[i], x_cross[i], "X_cross[" + langs[i] + "]");
  }
  log << "    cross " << fmt(*acc.cross * 100.0, 1) << ", same "
      << fmt(acc.same * 100.0, 1) << ", all " << fmt(acc.all * 100.0, 1)
      << ", X_cross per row verified\n";
}

// ---------------------------------------------------------------------------
// 3. Architectural invariants on randomized parameters, 20 seeds each.

void criterion_architecture(std::ostream& log) {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_fc = 32;
  cfg.n_enc_layers = 2;
  cfg.n_dec_layers = 1;
  cfg.vocab_size = 30;
  cfg.n_languages = 3;
  cfg.d_lang = 4;
  cfg.max_positions = 32;
  cfg.dropout_p = 0.0;

  const std::size_t n_seeds = 20;
  for (std::size_t seed = 0; seed < n_seeds; ++seed) {
    Rng root(9000 + seed);
    Rng init = root.child("init");
    ModelParams<float> params = ModelParams<float>::init(cfg, init);
    auto rand_row = [&](std::size_t len) {
      std::vector<int> r(len);
      for (auto& t : r)
        t = static_cast<int>(Vocabulary::kNumReserved +
                             root.below(cfg.vocab_size -
                                        Vocabulary::kNumReserved));
      return r;
    };
    auto rand_mat = [&](std::size_t n, std::size_t d) {
      Tensor<float> m = Tensor<float>::zeros({n, d});
      for (auto& v : m.mutable_value())
        v = static_cast<float>(root.normal());
      return m;
    };
    const std::string at = " (seed " + std::to_string(seed) + ")";

    // Causal masking: logits before a changed position are bit-identical.
    {
      std::vector<std::vector<int>> rows = {rand_row(4), rand_row(3)};
      std::vector<std::vector<int>> rows2 = rows;
      rows2[0][3] = rows[0][3] == 4 ? 5 : 4;
      TokenBatch g1 = eos_front_rows(rows);
      TokenBatch g2 = eos_front_rows(rows2);
      Tensor<float> p = rand_mat(2, cfg.d_model);
      Tensor<float> l1 = decode_batch(g1, 0, p, cfg, params);
      Tensor<float> l2 = decode_batch(g2, 0, p, cfg, params);
      const std::size_t v = cfg.vocab_size;
      bool prefix_same = true, suffix_changed = false;
      for (std::size_t pos = 0; pos < g1.t; ++pos) {
        for (std::size_t c = 0; c < v; ++c) {
          const bool same = l1.value()[pos * v + c] == l2.value()[pos * v + c];
          if (pos < 4 && !same) prefix_same = false;  // row 0, before change
          if (pos == 4 && !same) suffix_changed = true;
        }
      }
      require(prefix_same, "causal mask: prefix logits changed" + at);
      require(suffix_changed, "causal mask: probe had no effect" + at);
      for (std::size_t i = g1.t * v; i < l1.size(); ++i) {
        require(l1.value()[i] == l2.value()[i],
                "causal mask: unrelated row changed" + at);
      }
    }

    // Single-KV cross attention ignores the query content.
    {
      AttentionParams<float> attn = detail::init_attention<float>(16, root);
      Tensor<float> q = rand_mat(6, 16);
      Tensor<float> kv = rand_mat(1, 16);
      Tensor<float> out =
          multi_head_attention(q, kv, nullptr, attn, cfg.n_heads);
      for (std::size_t i = 1; i < out.rows(); ++i) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
          require(out.value()[i * out.cols() + c] == out.value()[c],
                  "single-KV attention depends on the query" + at);
        }
      }
    }

    // First-position pooling: p is exactly row 0 of each sentence.
    TokenBatch batch = frame_source_rows({rand_row(3), rand_row(6), rand_row(4)});
    EncodeResult<float> enc = encode_batch(batch, cfg, params);
    for (std::size_t i = 0; i < enc.n; ++i) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) {
        require(enc.p.value()[i * cfg.d_model + c] ==
                    enc.h_flat.value()[(i * enc.t) * cfg.d_model + c],
                "first-position pooling mismatch" + at);
      }
    }

    // Lazy final layer computes the same embeddings within 1e-6.
    {
      ModelConfig lazy = cfg;
      lazy.lazy_final_layer = true;
      EncodeResult<float> enc2 = encode_batch(batch, lazy, params);
      for (std::size_t i = 0; i < enc.p.size(); ++i) {
        require(std::abs(enc.p.value()[i] - enc2.p.value()[i]) <= 1e-6f,
                "lazy final layer deviates" + at);
      }
    }

    // Padding invariance: a sentence embeds the same alone or padded.
    {
      std::vector<int> sent = rand_row(4);
      EncodeResult<float> alone =
          encode_batch(frame_source_rows({sent}), cfg, params);
      EncodeResult<float> padded =
          encode_batch(frame_source_rows({sent, rand_row(8)}), cfg, params);
      for (std::size_t c = 0; c < cfg.d_model; ++c) {
        require(std::abs(alone.p.value()[c] - padded.p.value()[c]) <= 1e-6f,
                "padding changes the embedding" + at);
      }
    }
  }
  log << "    5 invariants x " << n_seeds << " seeds\n";
}

// ---------------------------------------------------------------------------
// 4. Loss properties.

void criterion_loss_properties(std::ostream& log) {
  Rng rng(77);
  auto rand_mat = [&](std::size_t n, std::size_t d) {
    Tensor<double> m = Tensor<double>::zeros({n, d});
    for (auto& v : m.mutable_value()) v = rng.normal();
    return m;
  };

  // Margin hinge boundaries (exactly representable operands).
  const double alpha = 0.5;
  auto delta_of = [&](double dn, double dp) {
    return margin_delta(Tensor<double>::scalar(dn), Tensor<double>::scalar(dp),
                        alpha)
        .item();
  };
  require(delta_of(0.75, 0.25) == 0.0, "margin: gap == alpha should be free");
  require(delta_of(2.0, 0.25) == 0.0, "margin: gap > alpha should be free");
  require(delta_of(0.25, 0.25) == alpha, "margin: zero gap should cost alpha");
  require(delta_of(0.5, 0.25) == 0.25, "margin: half gap should cost 0.25");

  // Paired distance: symmetric, zero at identity.
  Tensor<double> pa = rand_mat(1, 8), pb = rand_mat(1, 8);
  Tensor<double> vn = Tensor<double>::scalar(2.0);
  require(paired_distance(pa, pb, vn, 1e-6).item() ==
              paired_distance(pb, pa, vn, 1e-6).item(),
          "paired distance not symmetric");
  require(paired_distance(pa, pa, vn, 1e-6).item() == 0.0,
          "paired distance nonzero at identity");

  // Norm average is absolutely homogeneous.
  Tensor<double> emb = rand_mat(5, 7);
  Tensor<double> scaled = Tensor<double>::zeros({5, 7});
  for (std::size_t i = 0; i < emb.size(); ++i)
    scaled.mutable_value()[i] = -2.5 * emb.value()[i];
  const double v1 = batch_norm_average(emb).item();
  const double v2 = batch_norm_average(scaled).item();
  require(std::abs(v2 - 2.5 * v1) <= 1e-12 * (1.0 + std::abs(v2)),
          "norm average is not homogeneous");

  // Breakdown recomposes into the reported total.
  {
    LossConfig cfg = system_loss(true);
    Tensor<double> l_mt = Tensor<double>::scalar(1.7);
    Tensor<double> a = rand_mat(4, 8), b = rand_mat(4, 8);
    Rng neg_rng(5);
    auto [neg_ab, neg_ba] = sample_negatives(4, 2, neg_rng);
    auto [total, parts] = total_loss(l_mt, a, b, neg_ab, neg_ba, cfg);
    const double recomposed =
        cfg.beta * parts.d_p_mean +
        (cfg.lambda / 2.0) * (parts.delta_mean_ab + parts.delta_mean_ba) +
        0.5 * parts.l_mt;
    require(std::abs(total.item() - recomposed) <= 1e-6,
            "breakdown does not recompose: total " +
                std::to_string(total.item()) + " vs " +
                std::to_string(recomposed));
    require(parts.v_norm > 0.0, "v_norm missing from breakdown");
  }

  // Unconstrained objective is exactly half the translation loss.
  {
    LossConfig cfg = system_loss(false);
    Tensor<double> l_mt = Tensor<double>::scalar(3.14159);
    Tensor<double> a = rand_mat(3, 8), b = rand_mat(3, 8);
    auto [total, parts] = total_loss(l_mt, a, b, {}, {}, cfg);
    require(total.item() == 0.5 * 3.14159, "total != 0.5 * l_mt exactly");
    require(parts.d_p_mean == 0.0 && parts.delta_mean_ab == 0.0 &&
                parts.delta_mean_ba == 0.0 && parts.v_norm == 0.0,
            "distance fields should be exactly zero");
  }
  log << "    margin boundaries, symmetry, homogeneity, recomposition, "
         "half-translation identity\n";
}

// ---------------------------------------------------------------------------
// 5. Multilingual directional reproduction, 3 seeds.

void criterion_multilingual(std::ostream& log) {
  ws().ensure_multi();
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  SystemScores ct_mean, t_mean;
  for (std::uint64_t seed : seeds) {
    const auto t0 = Clock::now();
    SystemScores ct =
        run_system(ws().multi_dir, ws().multi_vocab, seed, true, false, 16,
                   1500, "m_ct_" + std::to_string(seed));
    SystemScores t =
        run_system(ws().multi_dir, ws().multi_vocab, seed, false, false, 16,
                   1500, "m_t_" + std::to_string(seed));
    const double secs =
        std::chrono::duration<double>(Clock::now() - t0).count();
    require(ct.steps == t.steps, "step counts differ between systems");
    log << "    seed " << seed << ": cT d_p " << fmt(ct.dp) << " retrieval "
        << fmt(ct.retrieval) << " cross " << fmt(ct.cross) << " | T d_p "
        << fmt(t.dp) << " retrieval " << fmt(t.retrieval) << " cross "
        << fmt(t.cross) << " (" << ct.steps << " steps each, " << fmt(secs, 0)
        << " s)\n";
    ct_mean.dp += ct.dp / 3;
    ct_mean.retrieval += ct.retrieval / 3;
    ct_mean.cross += ct.cross / 3;
    t_mean.dp += t.dp / 3;
    t_mean.retrieval += t.retrieval / 3;
    t_mean.cross += t.cross / 3;
  }
  log << "    means: cT d_p " << fmt(ct_mean.dp) << " retrieval "
      << fmt(ct_mean.retrieval) << " cross " << fmt(ct_mean.cross)
      << " | T d_p " << fmt(t_mean.dp) << " retrieval "
      << fmt(t_mean.retrieval) << " cross " << fmt(t_mean.cross) << "\n";

  std::vector<std::string> problems;
  if (!(ct_mean.dp <= 0.8 * t_mean.dp)) {
    problems.push_back("paired distance not >=20% lower (cT " +
                       fmt(ct_mean.dp) + " vs T " + fmt(t_mean.dp) + ")");
  }
  if (!(ct_mean.retrieval > t_mean.retrieval)) {
    problems.push_back("retrieval not strictly higher (cT " +
                       fmt(ct_mean.retrieval) + " vs T " +
                       fmt(t_mean.retrieval) + ")");
  }
  if (!(ct_mean.cross >= t_mean.cross)) {
    problems.push_back("zero-shot cross aggregate lower (cT " +
                       fmt(ct_mean.cross) + " vs T " + fmt(t_mean.cross) +
                       ")");
  }
  if (!problems.empty()) {
    std::string msg;
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (i) msg += "; ";
      msg += problems[i];
    }
    throw Failure(msg);
  }
}

// ---------------------------------------------------------------------------
// 6. Bilingual directional reproduction, 3 seeds.

void criterion_bilingual(std::ostream& log) {
  ws().ensure_bi();
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  double ct_cross = 0.0, t_cross = 0.0;
  for (std::uint64_t seed : seeds) {
    const auto t0 = Clock::now();
    SystemScores ct = run_system(ws().bi_dir, ws().bi_vocab, seed, true, true,
                                 20, 400, "b_ct_" + std::to_string(seed));
    SystemScores t = run_system(ws().bi_dir, ws().bi_vocab, seed, false, true,
                                20, 400, "b_t_" + std::to_string(seed));
    const double secs =
        std::chrono::duration<double>(Clock::now() - t0).count();
    require(ct.steps == t.steps, "step counts differ between systems");
    log << "    seed " << seed << ": cT cross " << fmt(ct.cross)
        << " retrieval " << fmt(ct.retrieval) << " | T cross " << fmt(t.cross)
        << " retrieval " << fmt(t.retrieval) << " (" << fmt(secs, 0)
        << " s)\n";
    ct_cross += ct.cross / 3;
    t_cross += t.cross / 3;
  }
  const double margin = (ct_cross - t_cross) * 100.0;
  log << "    means: cT cross " << fmt(ct_cross) << " vs T cross "
      << fmt(t_cross) << " -> margin " << fmt(margin, 1) << " points\n";
  require(margin >= 5.0, "cross margin " + fmt(margin, 1) +
                             " points, need >= 5");
}

// ---------------------------------------------------------------------------
// 7. Determinism and persistence.

nlohmann::ordered_json strip_timing(const std::string& line) {
  auto j = nlohmann::ordered_json::parse(line);
  j.erase("wall_ms");
  j.erase("tokens_per_sec");
  return j;
}

std::vector<nlohmann::ordered_json> stripped_log(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot read " + path);
  std::vector<nlohmann::ordered_json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(strip_timing(line));
  }
  return out;
}

TrainResult tiny_run(const std::string& tag, std::size_t epochs,
                     const std::string& resume = "") {
  ws().ensure_bi();
  TrainJob job;
  job.model = desk_model();
  job.train = desk_train(414, epochs, 1500);
  job.loss = system_loss(true);
  job.bilingual = true;
  job.resume_from = resume;
  return train(job, ws().split(ws().bi_dir, "train"), ws().bi_vocab,
               (ws().root / tag).string());
}

void criterion_determinism(std::ostream& log) {
  TrainResult a = tiny_run("det_a", 2);
  TrainResult b = tiny_run("det_b", 2);
  require(stripped_log(a.log_path) == stripped_log(b.log_path),
          "identical runs produced different logs");
  require(read_file(a.final_checkpoint) == read_file(b.final_checkpoint),
          "identical runs produced different checkpoints");

  TrainResult leg = tiny_run("det_c", 1);
  TrainResult resumed =
      tiny_run("det_c", 2, (ws().root / "det_c" / "epoch_1.ckpt").string());
  require(leg.steps < resumed.steps && resumed.steps == a.steps,
          "resumed run ends at a different step count");
  require(stripped_log(resumed.log_path) == stripped_log(a.log_path),
          "resumed run deviates from the uninterrupted loss trace");
  require(read_file(resumed.final_checkpoint) == read_file(a.final_checkpoint),
          "resumed run ends in a different checkpoint");

  const std::string v1 = (ws().root / "v1.vocab").string();
  const std::string v2 = (ws().root / "v2.vocab").string();
  save_vocab(ws().bi_vocab, v1);
  save_vocab(load_vocab(v1), v2);
  require(read_file(v1) == read_file(v2), "vocabulary does not round-trip");

  Checkpoint ckpt = load_checkpoint(a.final_checkpoint);
  const auto& docs = ws().split(ws().bi_dir, "dev").lines("L0");
  EmbeddingMatrix emb = embed_documents(
      ckpt, std::vector<std::string>(docs.begin(), docs.begin() + 10));
  const std::string e1 = (ws().root / "e1.emb").string();
  const std::string e2 = (ws().root / "e2.emb").string();
  write_embeddings(emb, e1);
  write_embeddings(read_embeddings(e1), e2);
  require(read_file(e1) == read_file(e2), "embeddings do not round-trip");
  log << "    repeated runs, resume, vocabulary and embedding files all "
         "bitwise stable (" << a.steps << " steps)\n";
}

// ---------------------------------------------------------------------------
// 8. Tokenizer identities over the full synthetic training corpus.

void criterion_tokenizer(std::ostream& log) {
  ws().ensure_multi();
  const ParallelCorpus& train = ws().split(ws().multi_dir, "train");
  std::size_t checked = 0;
  for (const auto& lang : train.languages) {
    for (const auto& line : train.lines(lang)) {
      const std::string back = decode(encode(line, ws().multi_vocab),
                                      ws().multi_vocab);
      require(back == line, "decode(encode(.)) changed a " + lang +
                                " line: '" + line + "' -> '" + back + "'");
      ++checked;
    }
  }
  const auto lines = Workspace::all_lines(train);
  const std::string once = serialize_vocab(learn_bpe(lines, 400));
  const std::string twice = serialize_vocab(learn_bpe(lines, 400));
  require(once == twice, "learned vocabulary differs between runs");
  log << "    round-tripped " << checked << " lines; repeated learning is "
      << "byte-identical\n";
}

// ---------------------------------------------------------------------------
// 9. Throughput is reported per step.

void criterion_throughput(std::ostream& log) {
  TrainResult run = tiny_run("thr", 1);
  std::ifstream in(run.log_path);
  require(in.good(), "cannot read " + run.log_path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    require(j.contains("tokens_per_sec"), "log line lacks tokens_per_sec");
    require(j.contains("tokens") && j["tokens"].get<double>() > 0,
            "log line lacks a token count");
    const double tps = j["tokens_per_sec"].get<double>();
    require(std::isfinite(tps) && tps > 0.0,
            "tokens_per_sec not a positive number: " + line);
    ++n;
  }
  require(n > 0, "training log is empty");
  log << "    " << n << " log lines with positive tokens/sec\n";
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    int id;
    const char* name;
    void (*fn)(std::ostream&);
  };
  const std::vector<Entry> criteria = {
      {1, "full-objective gradient suite", criterion_gradients},
      {2, "accuracy aggregation oracle", criterion_aggregation},
      {3, "architectural invariants", criterion_architecture},
      {4, "loss properties", criterion_loss_properties},
      {5, "multilingual directional reproduction", criterion_multilingual},
      {6, "bilingual directional reproduction", criterion_bilingual},
      {7, "determinism and persistence", criterion_determinism},
      {8, "tokenizer identities", criterion_tokenizer},
      {9, "throughput reporting", criterion_throughput},
  };

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    ++ran;
    std::cout << "[criterion " << c.id << "] " << c.name << "\n" << std::flush;
    const auto t0 = Clock::now();
    std::string verdict;
    try {
      c.fn(std::cout);
      verdict = "PASS";
    } catch (const std::exception& e) {
      verdict = std::string("FAIL - ") + e.what();
      ++failed;
    }
    const double secs =
        std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "criterion " << c.id << ": " << verdict << " ("
              << fmt(secs, 1) << " s)\n"
              << std::flush;
  }
  std::cout << "acceptance: " << (ran - failed) << "/" << ran
            << " criteria passed\n";
  return failed;
}
