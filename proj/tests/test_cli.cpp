#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "xlemb/checkpoint.hpp"

using namespace xlemb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("xlemb_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(XLEMB_CLI) + " " + args;
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kRunConfig = R"({
  "model": {"d_model": 16, "n_heads": 2, "d_fc": 32, "n_enc_layers": 1,
            "n_dec_layers": 1, "d_lang": 4, "max_positions": 64},
  "train": {"seed": 7, "base_lr": 0.002, "warmup_steps": 10, "dropout_p": 0.0,
            "weight_decay": 0.0, "max_tokens": 64, "n_epochs": 2},
  "loss": {"beta": 0.25, "n_neg": 2},
  "eval": {"seed": 11, "epochs": 4, "hidden": 16, "batch_size": 16},
  "synth": {"seed": 5, "n_languages": 2, "base_vocab_size": 40, "n_classes": 2,
            "train_sentences": 24, "dev_sentences": 8, "test_sentences": 8,
            "doc_len_min": 3, "doc_len_max": 6}
})";

// Shared end-to-end pipeline so the slow parts run once.
struct Pipeline {
  TempDir dir;
  std::string config, corpus, vocab, run;
  Pipeline() {
    config = dir.str("run.json");
    corpus = dir.str("corpus");
    vocab = dir.str("vocab.txt");
    run = dir.str("run");
    write_file(config, kRunConfig);
    REQUIRE(run_cli("gen-corpus --config " + config + " --out " + corpus +
                    " 2>/dev/null") == 0);
    REQUIRE(run_cli("learn-bpe --corpus " + corpus +
                    " --vocab-size 96 --out " + vocab + " 2>/dev/null") == 0);
    REQUIRE(run_cli("train --config " + config + " --corpus " + corpus +
                    " --vocab " + vocab + " --out " + run + " 2>/dev/null") == 0);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("help and usage errors carry the documented exit codes") {
  CHECK(run_cli("--help >/dev/null 2>&1") == 0);
  CHECK(run_cli("train --help >/dev/null 2>&1") == 0);
  CHECK(run_cli("frobnicate >/dev/null 2>&1") == 1);
  CHECK(run_cli(">/dev/null 2>&1") == 1);                   // no subcommand
  CHECK(run_cli("embed --input x >/dev/null 2>&1") == 1);   // missing flags
  CHECK(run_cli("plot --emb-a x --emb-b y --out z.svg --bogus w "
                ">/dev/null 2>&1") == 1);
}

TEST_CASE("pipeline subcommands produce the expected artifacts") {
  Pipeline& p = pipeline();
  CHECK(fs::exists(p.corpus + "/train.L0.txt"));
  CHECK(fs::exists(p.corpus + "/test.labels.txt"));
  CHECK(fs::exists(p.vocab));
  CHECK(fs::exists(p.run + "/final.ckpt"));
  CHECK(fs::exists(p.run + "/epoch_2.ckpt"));
  CHECK(fs::exists(p.run + "/train_log.ndjson"));

  const std::string docs = p.dir.str("docs.txt");
  const std::string emb = p.dir.str("a.emb");
  write_file(docs, "L0_w1 L0_w2 L0_w3\nL0_w4 L0_w5\n");
  CHECK(run_cli("embed --checkpoint " + p.run + "/final.ckpt --input " + docs +
                " --out " + emb + " --language L0 2>/dev/null") == 0);
  CHECK(fs::exists(emb));
  CHECK(read_file(emb).substr(0, 4) == "EMB1");

  const std::string report = p.dir.str("report.json");
  CHECK(run_cli("eval --checkpoint " + p.run + "/final.ckpt --dataset " +
                p.corpus + " --report " + report + " --config " + p.config +
                " 2>/dev/null") == 0);
  const std::string report_text = read_file(report);
  CHECK(report_text.find("\"accuracy\"") != std::string::npos);
  CHECK(report_text.find("\"distance\"") != std::string::npos);
  CHECK(report_text.find("\"retrieval\"") != std::string::npos);
  const std::string grid = read_file(p.dir.str("report.tsv"));
  CHECK(grid.rfind("train\\test", 0) == 0);
  CHECK(grid.find("\nall\t") != std::string::npos);

  const std::string emb_b = p.dir.str("b.emb");
  const std::string docs_b = p.dir.str("docs_b.txt");
  write_file(docs_b, "L1_w1 L1_w2 L1_w3\nL1_w4 L1_w5\n");
  CHECK(run_cli("embed --checkpoint " + p.run + "/final.ckpt --input " +
                docs_b + " --out " + emb_b + " --language L1 2>/dev/null") == 0);
  const std::string svg = p.dir.str("proj.svg");
  CHECK(run_cli("plot --emb-a " + emb + " --emb-b " + emb_b + " --out " + svg +
                " 2>/dev/null") == 0);
  CHECK(read_file(svg).rfind("<svg", 0) == 0);
  const std::string tsv = read_file(p.dir.str("proj.tsv"));
  CHECK(tsv.rfind("set\tindex\tx\ty", 0) == 0);
}

TEST_CASE("identical inputs and seeds give byte-identical artifacts") {
  Pipeline& p = pipeline();
  const std::string corpus2 = p.dir.str("corpus2");
  REQUIRE(run_cli("gen-corpus --config " + p.config + " --out " + corpus2 +
                  " 2>/dev/null") == 0);
  for (const auto& entry : fs::directory_iterator(p.corpus)) {
    const std::string name = entry.path().filename().string();
    CHECK(read_file(entry.path().string()) ==
          read_file(corpus2 + "/" + name));
  }

  const std::string run2 = p.dir.str("run2");
  REQUIRE(run_cli("train --config " + p.config + " --corpus " + p.corpus +
                  " --vocab " + p.vocab + " --out " + run2 + " 2>/dev/null") == 0);
  CHECK(read_file(p.run + "/final.ckpt") == read_file(run2 + "/final.ckpt"));

  const std::string docs = p.dir.str("det.txt");
  write_file(docs, "L0_w1 L0_w2\n");
  const std::string e1 = p.dir.str("det1.emb"), e2 = p.dir.str("det2.emb");
  REQUIRE(run_cli("embed --checkpoint " + p.run + "/final.ckpt --input " +
                  docs + " --out " + e1 + " 2>/dev/null") == 0);
  REQUIRE(run_cli("embed --checkpoint " + p.run + "/final.ckpt --input " +
                  docs + " --out " + e2 + " 2>/dev/null") == 0);
  CHECK(read_file(e1) == read_file(e2));
}

TEST_CASE("data and validation failures exit with code 2") {
  Pipeline& p = pipeline();
  const std::string bad = p.dir.str("bad.json");
  write_file(bad, R"({"synth": {"seed": 1, "bogus": 3}})");
  const std::string err_log = p.dir.str("err.txt");
  CHECK(run_cli("gen-corpus --config " + bad + " --out " + p.dir.str("x") +
                " 2>" + err_log) == 2);
  CHECK(read_file(err_log).find("bogus") != std::string::npos);

  // Missing seed is a schema violation, not a silent default.
  write_file(bad, R"({"synth": {"n_languages": 2}})");
  CHECK(run_cli("gen-corpus --config " + bad + " --out " + p.dir.str("x") +
                " 2>" + err_log) == 2);
  CHECK(read_file(err_log).find("seed") != std::string::npos);

  CHECK(run_cli("embed --checkpoint " + p.dir.str("absent.ckpt") +
                " --input " + p.config + " --out " + p.dir.str("y.emb") +
                " >/dev/null 2>&1") == 2);
  CHECK(run_cli("eval --checkpoint " + p.run + "/final.ckpt --dataset " +
                p.dir.str("no_such_dir") + " --report " + p.dir.str("r.json") +
                " --config " + p.config + " >/dev/null 2>&1") == 2);

  // A text file is not a checkpoint.
  CHECK(run_cli("embed --checkpoint " + p.config + " --input " + p.config +
                " --out " + p.dir.str("y.emb") + " >/dev/null 2>&1") == 2);

  // Input with an empty line cannot be embedded.
  const std::string docs = p.dir.str("hole.txt");
  write_file(docs, "L0_w1\n\nL0_w2\n");
  CHECK(run_cli("embed --checkpoint " + p.run + "/final.ckpt --input " + docs +
                " --out " + p.dir.str("z.emb") + " 2>" + err_log) == 2);
  CHECK(read_file(err_log).find("document 1") != std::string::npos);
}

TEST_CASE("numeric failures exit with code 3") {
  Pipeline& p = pipeline();
  Checkpoint ckpt = load_checkpoint(p.run + "/final.ckpt");
  ckpt.params.enc_ln_g.mutable_value()[0] = std::nanf("");
  const std::string poisoned = p.dir.str("poisoned.ckpt");
  save_checkpoint(ckpt, poisoned);

  const std::string docs = p.dir.str("nan.txt");
  write_file(docs, "L0_w1 L0_w2\n");
  const std::string err_log = p.dir.str("nan_err.txt");
  CHECK(run_cli("embed --checkpoint " + poisoned + " --input " + docs +
                " --out " + p.dir.str("nan.emb") + " 2>" + err_log) == 3);
  CHECK(read_file(err_log).find("numeric error") != std::string::npos);
}

TEST_CASE("grad-check passes on a toy model and reports per-parameter results") {
  Pipeline& p = pipeline();
  const std::string toy = p.dir.str("toy.json");
  write_file(toy, R"({
    "model": {"d_model": 16, "n_heads": 2, "d_fc": 32, "n_enc_layers": 2,
              "n_dec_layers": 1, "d_lang": 4, "max_positions": 32,
              "vocab_size": 50, "n_languages": 2},
    "train": {"seed": 3}
  })");
  const std::string log = p.dir.str("gc.txt");
  CHECK(run_cli("grad-check --config " + toy + " 2>" + log) == 0);
  const std::string out = read_file(log);
  CHECK(out.find("gradient check passed") != std::string::npos);
  CHECK(out.find("enc_embed: ok") != std::string::npos);
  CHECK(out.find("out_w: ok") != std::string::npos);
}

TEST_CASE("train resumes from a checkpoint and reproduces the full run") {
  Pipeline& p = pipeline();
  const std::string cfg1 = p.dir.str("one_epoch.json");
  std::string text = kRunConfig;
  const auto pos = text.find("\"n_epochs\": 2");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 13, "\"n_epochs\": 1");
  write_file(cfg1, text);

  const std::string leg = p.dir.str("leg");
  REQUIRE(run_cli("train --config " + cfg1 + " --corpus " + p.corpus +
                  " --vocab " + p.vocab + " --out " + leg + " 2>/dev/null") == 0);
  REQUIRE(run_cli("train --config " + p.config + " --corpus " + p.corpus +
                  " --vocab " + p.vocab + " --out " + leg + " --resume " + leg +
                  "/epoch_1.ckpt 2>/dev/null") == 0);
  CHECK(read_file(leg + "/final.ckpt") == read_file(p.run + "/final.ckpt"));

  // Resuming under a different seed is refused.
  std::string reseeded = kRunConfig;
  const auto spos = reseeded.find("\"seed\": 7");
  REQUIRE(spos != std::string::npos);
  reseeded.replace(spos, 9, "\"seed\": 8");
  const std::string cfg2 = p.dir.str("reseeded.json");
  write_file(cfg2, reseeded);
  CHECK(run_cli("train --config " + cfg2 + " --corpus " + p.corpus +
                " --vocab " + p.vocab + " --out " + p.dir.str("leg2") +
                " --resume " + leg + "/epoch_1.ckpt >/dev/null 2>&1") == 2);
}
