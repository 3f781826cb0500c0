#include "xlemb/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <vector>

#include "json.hpp"
#include "xlemb/common.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/text_util.hpp"

namespace xlemb {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthSpec::validate() const {
  if (n_languages < 2) {
    throw ConfigError("synth: n_languages must be at least 2, got " +
                      std::to_string(n_languages));
  }
  if (n_classes < 2) {
    throw ConfigError("synth: n_classes must be at least 2, got " +
                      std::to_string(n_classes));
  }
  if (base_vocab_size < 10 * n_classes) {
    throw ConfigError("synth: base_vocab_size must be at least 10x n_classes (" +
                      std::to_string(10 * n_classes) + "), got " +
                      std::to_string(base_vocab_size));
  }
  if (train_sentences == 0 || dev_sentences == 0 || test_sentences == 0) {
    throw ConfigError("synth: every split needs at least one sentence");
  }
  if (doc_len_min == 0 || doc_len_min > doc_len_max) {
    throw ConfigError("synth: doc length range must satisfy 1 <= min <= max, "
                      "got [" +
                      std::to_string(doc_len_min) + ", " +
                      std::to_string(doc_len_max) + "]");
  }
  if (class_topic_skew < 0.0) {
    throw ConfigError("synth: class_topic_skew must be nonnegative, got " +
                      std::to_string(class_topic_skew));
  }
}

std::string serialize_spec(const SynthSpec& spec) {
  json j;
  j["n_languages"] = spec.n_languages;
  j["base_vocab_size"] = spec.base_vocab_size;
  j["n_classes"] = spec.n_classes;
  j["train_sentences"] = spec.train_sentences;
  j["dev_sentences"] = spec.dev_sentences;
  j["test_sentences"] = spec.test_sentences;
  j["doc_len_min"] = spec.doc_len_min;
  j["doc_len_max"] = spec.doc_len_max;
  j["class_topic_skew"] = spec.class_topic_skew;
  j["permute_within_window"] = spec.permute_within_window;
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

SynthSpec parse_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("spec.json: ") + e.what());
  }
  SynthSpec spec;
  spec.n_languages = j.at("n_languages").get<std::size_t>();
  spec.base_vocab_size = j.at("base_vocab_size").get<std::size_t>();
  spec.n_classes = j.at("n_classes").get<std::size_t>();
  spec.train_sentences = j.at("train_sentences").get<std::size_t>();
  spec.dev_sentences = j.at("dev_sentences").get<std::size_t>();
  spec.test_sentences = j.at("test_sentences").get<std::size_t>();
  spec.doc_len_min = j.at("doc_len_min").get<std::size_t>();
  spec.doc_len_max = j.at("doc_len_max").get<std::size_t>();
  spec.class_topic_skew = j.at("class_topic_skew").get<double>();
  spec.permute_within_window = j.at("permute_within_window").get<bool>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

namespace {

// Class-conditional unigram CDF: log-normal weights, one independent stream
// per class so adding classes never shifts earlier ones.
std::vector<double> class_cdf(const SynthSpec& spec, std::size_t cls,
                              const Rng& root) {
  Rng rng = root.child("class_dist", cls);
  std::vector<double> w(spec.base_vocab_size);
  double sum = 0.0;
  for (auto& x : w) {
    x = std::exp(spec.class_topic_skew * rng.normal());
    sum += x;
  }
  double acc = 0.0;
  for (auto& x : w) {
    acc += x / sum;
    x = acc;
  }
  w.back() = 1.0;  // guard against rounding undershoot
  return w;
}

std::size_t draw_token(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  return static_cast<std::size_t>(
      std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

// Fixed per-language permutation of every full 3-token window.
std::vector<int> window_perm(const Rng& root, std::size_t lang) {
  Rng rng = root.child("window_perm", lang);
  std::vector<int> p = {0, 1, 2};
  rng.shuffle(p);
  return p;
}

struct SplitDocs {
  std::vector<std::vector<std::size_t>> docs;  // base-token sequences
  std::vector<std::size_t> labels;
};

}  // namespace

void generate_corpus(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);

  Rng root(spec.seed);
  std::vector<std::vector<double>> cdfs;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    cdfs.push_back(class_cdf(spec, c, root));
  }

  const std::vector<std::pair<std::string, std::size_t>> splits = {
      {"train", spec.train_sentences},
      {"dev", spec.dev_sentences},
      {"test", spec.test_sentences}};

  std::set<std::vector<std::size_t>> seen;  // cross-split uniqueness
  std::vector<SplitDocs> generated;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    Rng rng = root.child("split", s);
    SplitDocs out;
    for (std::size_t i = 0; i < splits[s].second; ++i) {
      std::vector<std::size_t> doc;
      std::size_t cls = 0;
      bool fresh = false;
      for (int attempt = 0; attempt < 1000 && !fresh; ++attempt) {
        cls = static_cast<std::size_t>(rng.below(spec.n_classes));
        const std::size_t len =
            spec.doc_len_min +
            static_cast<std::size_t>(
                rng.below(spec.doc_len_max - spec.doc_len_min + 1));
        doc.clear();
        for (std::size_t t = 0; t < len; ++t) {
          doc.push_back(draw_token(cdfs[cls], rng));
        }
        fresh = seen.insert(doc).second;
      }
      if (!fresh) {
        throw DataError("synth: could not draw a fresh document for split '" +
                        splits[s].first +
                        "'; the spec's vocabulary or length range is too "
                        "small for its sentence counts");
      }
      out.docs.push_back(std::move(doc));
      out.labels.push_back(cls);
    }
    generated.push_back(std::move(out));
  }

  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& split_name = splits[s].first;
    for (std::size_t lang = 0; lang < spec.n_languages; ++lang) {
      const std::vector<int> perm =
          spec.permute_within_window ? window_perm(root, lang)
                                     : std::vector<int>{0, 1, 2};
      std::string text;
      for (const auto& doc : generated[s].docs) {
        std::vector<std::size_t> ordered = doc;
        for (std::size_t w = 0; w + 3 <= doc.size(); w += 3) {
          for (int k = 0; k < 3; ++k) {
            ordered[w + k] = doc[w + static_cast<std::size_t>(perm[k])];
          }
        }
        for (std::size_t t = 0; t < ordered.size(); ++t) {
          if (t > 0) text += ' ';
          text += "L" + std::to_string(lang) + "_w" + std::to_string(ordered[t]);
        }
        text += '\n';
      }
      write_file((fs::path(out_dir) /
                  (split_name + ".L" + std::to_string(lang) + ".txt"))
                     .string(),
                 text);
    }
    std::string labels;
    for (std::size_t cls : generated[s].labels) {
      labels += "c" + std::to_string(cls) + "\n";
    }
    write_file((fs::path(out_dir) / (split_name + ".labels.txt")).string(),
               labels);
  }
  write_file((fs::path(out_dir) / "spec.json").string(), serialize_spec(spec));
}

}  // namespace xlemb
