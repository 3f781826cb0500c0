#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xlemb/checkpoint.hpp"
#include "xlemb/config.hpp"
#include "xlemb/data.hpp"
#include "xlemb/eval.hpp"
#include "xlemb/grad_suite.hpp"
#include "xlemb/synth.hpp"
#include "xlemb/tokenizer.hpp"
#include "xlemb/trainer.hpp"

namespace {

using namespace xlemb;
using ordered_json = nlohmann::ordered_json;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file " + path);
  out << content;
  if (!out) throw DataError("failed writing " + path);
}

// report.json -> report.tsv, plot.svg -> plot.tsv; otherwise append .tsv.
std::string tsv_sibling(const std::string& path, const std::string& ext) {
  if (path.size() > ext.size() &&
      path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
    return path.substr(0, path.size() - ext.size()) + ".tsv";
  }
  return path + ".tsv";
}

int run(int argc, char** argv) {
  CLI::App app{"cross-lingual sentence embeddings: corpus generation, BPE, "
               "training, embedding, evaluation, and plotting"};
  app.require_subcommand(1);

  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand(
      "gen-corpus", "generate a deterministic synthetic parallel corpus");
  gen->add_option("--config", gen_config, "run configuration (synth section)")
      ->required();
  gen->add_option("--out", gen_out, "output corpus directory")->required();
  gen->callback([&] {
    RunConfig rc = load_run_config(gen_config);
    rc.require("synth");
    generate_corpus(rc.synth, gen_out);
    std::cerr << "wrote " << rc.synth.n_languages << "-language corpus ("
              << rc.synth.train_sentences << "/" << rc.synth.dev_sentences
              << "/" << rc.synth.test_sentences << " sentences) to " << gen_out
              << "\n";
  });

  std::string bpe_corpus, bpe_out;
  std::size_t bpe_size = 0;
  auto* bpe = app.add_subcommand(
      "learn-bpe", "learn a joint BPE vocabulary from a corpus train split");
  bpe->add_option("--corpus", bpe_corpus, "corpus directory")->required();
  bpe->add_option("--vocab-size", bpe_size, "target vocabulary size")
      ->required();
  bpe->add_option("--out", bpe_out, "output vocabulary file")->required();
  bpe->callback([&] {
    ParallelCorpus corpus = load_split(bpe_corpus, "train");
    std::vector<std::string> lines;
    for (const auto& lang : corpus.languages) {
      const auto& ls = corpus.lines(lang);
      lines.insert(lines.end(), ls.begin(), ls.end());
    }
    Vocabulary vocab = learn_bpe(lines, bpe_size);
    vocab.set_languages(corpus.languages);
    save_vocab(vocab, bpe_out);
    std::cerr << "learned " << vocab.size() << "-token vocabulary from "
              << lines.size() << " lines -> " << bpe_out << "\n";
  });

  std::string tr_config, tr_corpus, tr_vocab, tr_out, tr_resume;
  bool tr_bilingual = false;
  auto* tr = app.add_subcommand(
      "train", "train the translation model (loss.beta = 0 disables the "
               "embedding-distance constraint)");
  tr->add_option("--config", tr_config, "run configuration")->required();
  tr->add_option("--corpus", tr_corpus, "corpus directory")->required();
  tr->add_option("--vocab", tr_vocab, "vocabulary file")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_flag("--bilingual", tr_bilingual,
               "use both directions of a 2-language corpus");
  tr->add_option("--resume", tr_resume,
                 "checkpoint to continue from (same config and corpus)");
  tr->callback([&] {
    RunConfig rc = load_run_config(tr_config);
    rc.require("model");
    rc.require("train");
    TrainJob job;
    job.model = rc.model;
    job.train = rc.train;
    job.loss = rc.loss;
    job.data = rc.data;
    job.bilingual = tr_bilingual;
    job.resume_from = tr_resume;
    ParallelCorpus corpus = load_split(tr_corpus, "train");
    Vocabulary vocab = load_vocab(tr_vocab);
    TrainResult res = train(job, corpus, vocab, tr_out);
    const std::size_t done = res.epoch_mean_loss.size();
    const std::size_t start = job.train.n_epochs - done;
    for (std::size_t i = 0; i < done; ++i) {
      std::cerr << "epoch " << (start + i + 1) << " mean loss "
                << res.epoch_mean_loss[i] << "\n";
    }
    std::cerr << "training complete: " << res.steps << " steps, checkpoint "
              << res.final_checkpoint << ", log " << res.log_path << "\n";
  });

  std::string emb_ckpt, emb_input, emb_out, emb_language;
  std::size_t emb_max_tokens = 750;
  auto* emb = app.add_subcommand(
      "embed", "embed one document per input line into a binary matrix");
  emb->add_option("--checkpoint", emb_ckpt, "model checkpoint")->required();
  emb->add_option("--input", emb_input, "text file, one document per line")
      ->required();
  emb->add_option("--out", emb_out, "output embedding file")->required();
  emb->add_option("--max-doc-tokens", emb_max_tokens,
                  "truncate documents to this many subword tokens")
      ->capture_default_str();
  emb->add_option("--language", emb_language,
                  "language tag recorded in the output file");
  emb->callback([&] {
    Checkpoint ckpt = load_checkpoint(emb_ckpt);
    std::vector<std::string> docs = read_lines(emb_input);
    EmbeddingMatrix m = embed_documents(ckpt, docs, emb_max_tokens, emb_language);
    write_embeddings(m, emb_out);
    std::cerr << "embedded " << m.n << " documents (" << m.d
              << " dimensions) -> " << emb_out << "\n";
  });

  std::string ev_ckpt, ev_dataset, ev_report, ev_config;
  auto* ev = app.add_subcommand(
      "eval", "zero-shot classification matrix plus paired-distance report");
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--dataset", ev_dataset,
                 "labeled corpus directory with train/dev/test splits")
      ->required();
  ev->add_option("--report", ev_report, "output JSON report path")->required();
  ev->add_option("--config", ev_config, "run configuration (eval section)")
      ->required();
  ev->callback([&] {
    RunConfig rc = load_run_config(ev_config);
    rc.require("eval");
    Checkpoint ckpt = load_checkpoint(ev_ckpt);
    std::map<std::string, ParallelCorpus> splits;
    auto split_of = [&](const std::string& s) -> const ParallelCorpus& {
      auto it = splits.find(s);
      if (it == splits.end())
        it = splits.emplace(s, load_split(ev_dataset, s)).first;
      return it->second;
    };
    const std::vector<std::string> languages = split_of("train").languages;
    DatasetAccessor accessor = [&](const std::string& lang,
                                   const std::string& split) {
      const ParallelCorpus& c = split_of(split);
      return SplitDocs{c.lines(lang), c.labels};
    };
    AccuracyMatrix acc = zero_shot_matrix(ckpt, languages, accessor, rc.eval);
    const double eps = rc.loss.epsilon;
    DistanceReport dist = paired_distance_report(ckpt, split_of("dev"), eps,
                                                 rc.eval.max_doc_tokens);

    ordered_json report;
    report["accuracy"] = ordered_json::parse(accuracy_matrix_to_json(acc));
    ordered_json pairs = ordered_json::array();
    for (const auto& p : dist.pairs) {
      pairs.push_back({{"lang_a", p.lang_a},
                       {"lang_b", p.lang_b},
                       {"mean_d_p", p.mean_d_p},
                       {"median_d_p", p.median_d_p},
                       {"retrieval", p.retrieval}});
    }
    report["distance"] = ordered_json{{"v_norm", dist.v_norm},
                                      {"n_sentences", dist.n_sentences},
                                      {"mean_retrieval", dist.mean_retrieval},
                                      {"pairs", pairs}};
    write_text(ev_report, report.dump(2) + "\n");
    const std::string grid_path = tsv_sibling(ev_report, ".json");
    write_text(grid_path, accuracy_matrix_to_tsv(acc));
    std::cerr << "accuracy: all " << (acc.all * 100.0);
    if (acc.cross) std::cerr << ", cross " << (*acc.cross * 100.0);
    std::cerr << ", same " << (acc.same * 100.0)
              << " (percent); mean retrieval " << dist.mean_retrieval << "\n";
    std::cerr << "report -> " << ev_report << ", grid -> " << grid_path << "\n";
  });

  std::string plot_a, plot_b, plot_out;
  auto* plot = app.add_subcommand(
      "plot", "project two embedding sets to 2D and render an SVG");
  plot->add_option("--emb-a", plot_a, "first embedding file")->required();
  plot->add_option("--emb-b", plot_b, "second embedding file")->required();
  plot->add_option("--out", plot_out, "output SVG path")->required();
  plot->callback([&] {
    EmbeddingMatrix a = read_embeddings(plot_a);
    EmbeddingMatrix b = read_embeddings(plot_b);
    Projection proj = pca_project(a, b);
    write_projection_svg(proj, plot_out);
    const std::string tsv_path = tsv_sibling(plot_out, ".svg");
    write_projection_tsv(proj, tsv_path);
    std::cerr << "projected " << a.n << "+" << b.n
              << " points; component variances " << proj.var1 << ", "
              << proj.var2 << " -> " << plot_out << ", " << tsv_path << "\n";
  });

  std::string gc_config;
  auto* gc = app.add_subcommand(
      "grad-check", "finite-difference check of the full objective's "
                    "gradients on a toy batch");
  gc->add_option("--config", gc_config,
                 "run configuration (model and train sections)")
      ->required();
  gc->callback([&] {
    RunConfig rc = load_run_config(gc_config);
    rc.require("model");
    rc.require("train");
    ObjectiveCheckSpec spec;
    spec.model = rc.model;
    spec.loss = rc.loss;
    spec.seed = rc.train.seed;
    GradCheckReport report = check_objective_gradients(spec);
    std::cerr << report.summary();
    if (!report.pass) {
      throw NumericError("gradient check failed: max relative error " +
                         std::to_string(report.max_rel_err));
    }
    std::cerr << "gradient check passed: max relative error "
              << report.max_rel_err << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "run '" << (argc > 0 ? argv[0] : "xlemb")
              << " --help' for usage\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const xlemb::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const xlemb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
