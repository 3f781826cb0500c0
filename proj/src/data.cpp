#include "xlemb/data.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "xlemb/common.hpp"
#include "xlemb/text_util.hpp"

namespace xlemb {

namespace fs = std::filesystem;

const std::vector<std::string>& ParallelCorpus::lines(
    const std::string& lang) const {
  auto it = text.find(lang);
  if (it == text.end()) {
    throw DataError("corpus has no language '" + lang + "'");
  }
  return it->second;
}

const std::vector<std::vector<int>>& EncodedCorpus::ids(
    const std::string& lang) const {
  auto it = tokens.find(lang);
  if (it == tokens.end()) {
    throw DataError("corpus has no language '" + lang + "'");
  }
  return it->second;
}

namespace {

std::vector<std::string> read_clean_lines(const std::string& path) {
  std::vector<std::string> lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      utf8_chars(lines[i]);  // validation only
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    lines[i] = normalize_whitespace(lines[i]);
    if (lines[i].empty()) {
      throw DataError(path + ":" + std::to_string(i + 1) +
                      ": empty line after normalization");
    }
  }
  return lines;
}

}  // namespace

ParallelCorpus load_parallel(const std::map<std::string, std::string>& paths,
                             const std::string& labels_path) {
  if (paths.empty()) {
    throw DataError("load_parallel: no language files given");
  }
  ParallelCorpus corpus;
  for (const auto& [lang, path] : paths) {
    corpus.languages.push_back(lang);
    corpus.text[lang] = read_clean_lines(path);
  }
  const std::size_t n = corpus.text.begin()->second.size();
  bool mismatch = false;
  for (const auto& [lang, lines] : corpus.text) {
    if (lines.size() != n) mismatch = true;
  }
  if (!labels_path.empty()) {
    corpus.labels = read_clean_lines(labels_path);
    if (corpus.labels.size() != n) mismatch = true;
  }
  if (mismatch) {
    std::string detail = "load_parallel: line counts differ:";
    for (const auto& [lang, path] : paths) {
      detail += " " + path + "=" + std::to_string(corpus.text[lang].size());
    }
    if (!labels_path.empty()) {
      detail += " " + labels_path + "=" + std::to_string(corpus.labels.size());
    }
    throw DataError(detail);
  }
  return corpus;
}

ParallelCorpus load_split(const std::string& dir, const std::string& split) {
  if (!fs::is_directory(dir)) {
    throw DataError("load_split: not a directory: " + dir);
  }
  const std::string prefix = split + ".";
  std::map<std::string, std::string> paths;
  std::string labels_path;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() <= prefix.size() + 4 || name.rfind(prefix, 0) != 0 ||
        name.substr(name.size() - 4) != ".txt") {
      continue;
    }
    const std::string middle =
        name.substr(prefix.size(), name.size() - prefix.size() - 4);
    if (middle.empty() || middle.find('.') != std::string::npos) continue;
    if (middle == "labels") {
      labels_path = entry.path().string();
    } else {
      paths[middle] = entry.path().string();
    }
  }
  if (paths.empty()) {
    throw DataError("load_split: no files matching " + prefix +
                    "<lang>.txt in " + dir);
  }
  return load_parallel(paths, labels_path);
}

EncodedCorpus encode_corpus(const ParallelCorpus& corpus,
                            const Vocabulary& vocab) {
  EncodedCorpus out;
  out.languages = corpus.languages;
  out.labels = corpus.labels;
  for (const auto& lang : corpus.languages) {
    auto& rows = out.tokens[lang];
    for (const auto& line : corpus.lines(lang)) {
      rows.push_back(encode(line, vocab));
    }
  }
  return out;
}

std::vector<CurriculumDirection> build_curriculum(
    const std::vector<std::string>& languages,
    const std::pair<std::string, std::string>& pivots, bool bilingual) {
  std::vector<std::string> langs = languages;
  std::sort(langs.begin(), langs.end());
  if (std::adjacent_find(langs.begin(), langs.end()) != langs.end()) {
    throw DataError("curriculum: duplicate language in list");
  }
  if (langs.size() < 2) {
    throw DataError("curriculum: need at least 2 languages, got " +
                    std::to_string(langs.size()));
  }
  if (bilingual) {
    if (langs.size() != 2) {
      throw DataError("curriculum: bilingual mode needs exactly 2 languages, "
                      "got " +
                      std::to_string(langs.size()));
    }
    return {{langs[0], langs[1]}, {langs[1], langs[0]}};
  }
  if (pivots.first == pivots.second) {
    throw DataError("curriculum: the two pivots must differ, got '" +
                    pivots.first + "' twice");
  }
  auto has = [&](const std::string& l) {
    return std::find(langs.begin(), langs.end(), l) != langs.end();
  };
  if (!has(pivots.first) || !has(pivots.second)) {
    throw DataError("curriculum: pivot '" +
                    (has(pivots.first) ? pivots.second : pivots.first) +
                    "' is not one of the corpus languages");
  }
  std::vector<CurriculumDirection> out;
  for (const auto& src : langs) {
    if (src == pivots.first) {
      out.push_back({src, pivots.second});
    } else if (src == pivots.second) {
      out.push_back({src, pivots.first});
    } else {
      out.push_back({src, pivots.first});
      out.push_back({src, pivots.second});
    }
  }
  return out;
}

TokenBatch frame_source_rows(const std::vector<std::vector<int>>& token_rows) {
  TokenBatch b;
  b.n = token_rows.size();
  for (const auto& r : token_rows) b.t = std::max(b.t, r.size() + 2);
  for (const auto& r : token_rows) {
    b.lengths.push_back(r.size() + 2);
    b.ids.push_back(Vocabulary::kStrTag);
    b.ids.insert(b.ids.end(), r.begin(), r.end());
    b.ids.push_back(Vocabulary::kEos);
    b.ids.resize(b.ids.size() + b.t - (r.size() + 2), Vocabulary::kPad);
  }
  return b;
}

TokenBatch eos_front_rows(const std::vector<std::vector<int>>& token_rows) {
  TokenBatch b;
  b.n = token_rows.size();
  for (const auto& r : token_rows) b.t = std::max(b.t, r.size() + 1);
  for (const auto& r : token_rows) {
    b.lengths.push_back(r.size() + 1);
    b.ids.push_back(Vocabulary::kEos);
    b.ids.insert(b.ids.end(), r.begin(), r.end());
    b.ids.resize(b.ids.size() + b.t - (r.size() + 1), Vocabulary::kPad);
  }
  return b;
}

std::vector<int> gold_rows_flat(const std::vector<std::vector<int>>& token_rows) {
  std::size_t t = 0;
  for (const auto& r : token_rows) t = std::max(t, r.size() + 1);
  std::vector<int> flat;
  for (const auto& r : token_rows) {
    flat.insert(flat.end(), r.begin(), r.end());
    flat.push_back(Vocabulary::kEos);
    flat.resize(flat.size() + t - (r.size() + 1), Vocabulary::kPad);
  }
  return flat;
}

std::vector<Batch> make_batches(const EncodedCorpus& corpus,
                                const CurriculumDirection& direction,
                                std::size_t max_tokens,
                                std::uint64_t epoch_seed) {
  if (max_tokens == 0) {
    throw DataError("make_batches: max_tokens must be positive");
  }
  const auto& src_rows = corpus.ids(direction.src);
  const auto& tgt_rows = corpus.ids(direction.tgt);
  if (src_rows.size() != tgt_rows.size()) {
    throw DataError("make_batches: " + direction.src + " has " +
                    std::to_string(src_rows.size()) + " lines but " +
                    direction.tgt + " has " + std::to_string(tgt_rows.size()));
  }
  const std::size_t n = src_rows.size();
  if (n == 0) {
    throw DataError("make_batches: empty corpus");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (src_rows[i].size() + 2 > max_tokens) {
      throw DataError("make_batches: line " + std::to_string(i + 1) + " of " +
                      direction.src + " needs " +
                      std::to_string(src_rows[i].size() + 2) +
                      " framed tokens, over the budget of " +
                      std::to_string(max_tokens));
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return src_rows[a].size() < src_rows[b].size();
  });

  std::vector<std::vector<std::size_t>> groups;
  std::size_t width = 0;
  for (std::size_t idx : order) {
    const std::size_t len = src_rows[idx].size() + 2;
    if (!groups.empty()) {
      const std::size_t new_width = std::max(width, len);
      if ((groups.back().size() + 1) * new_width <= max_tokens) {
        groups.back().push_back(idx);
        width = new_width;
        continue;
      }
    }
    groups.push_back({idx});
    width = len;
  }

  Rng rng(epoch_seed);
  rng.shuffle(groups);

  std::vector<Batch> batches;
  for (const auto& group : groups) {
    Batch b;
    b.direction = direction;
    b.pair_indices = group;
    std::vector<std::vector<int>> src_tok, tgt_tok;
    for (std::size_t idx : group) {
      src_tok.push_back(src_rows[idx]);
      tgt_tok.push_back(tgt_rows[idx]);
    }
    b.src = frame_source_rows(src_tok);
    b.tgt_g = eos_front_rows(tgt_tok);
    b.tgt_y = gold_rows_flat(tgt_tok);
    batches.push_back(std::move(b));
  }
  return batches;
}

std::pair<std::vector<std::vector<int>>, std::vector<std::vector<int>>>
sample_negatives(std::size_t batch_size, std::size_t n_neg, Rng& rng) {
  if (batch_size == 0) {
    throw DataError("sample_negatives: empty batch");
  }
  if (n_neg > batch_size - 1) {
    throw DataError("sample_negatives: " + std::to_string(n_neg) +
                    " negatives from a batch of " +
                    std::to_string(batch_size));
  }
  auto draw = [&]() {
    std::vector<std::vector<int>> neg(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::vector<int> pool;
      pool.reserve(batch_size - 1);
      for (std::size_t j = 0; j < batch_size; ++j) {
        if (j != i) pool.push_back(static_cast<int>(j));
      }
      for (std::size_t k = 0; k < n_neg; ++k) {
        const std::size_t pick =
            k + static_cast<std::size_t>(rng.below(pool.size() - k));
        std::swap(pool[k], pool[pick]);
        neg[i].push_back(pool[k]);
      }
    }
    return neg;
  };
  auto neg_ab = draw();
  auto neg_ba = draw();
  return {std::move(neg_ab), std::move(neg_ba)};
}

}  // namespace xlemb
