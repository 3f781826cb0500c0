#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xlemb/model.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/tokenizer.hpp"

namespace xlemb {

// Line-aligned multilingual corpus: line i of every language is one mutual
// translation set. Labels, when present, are aligned the same way.
struct ParallelCorpus {
  std::vector<std::string> languages;  // sorted
  std::map<std::string, std::vector<std::string>> text;
  std::vector<std::string> labels;  // empty when no label file was given

  std::size_t size() const {
    return text.empty() ? 0 : text.begin()->second.size();
  }
  const std::vector<std::string>& lines(const std::string& lang) const;
};

struct EncodedCorpus {
  std::vector<std::string> languages;
  std::map<std::string, std::vector<std::vector<int>>> tokens;
  std::vector<std::string> labels;

  std::size_t size() const {
    return tokens.empty() ? 0 : tokens.begin()->second.size();
  }
  const std::vector<std::vector<int>>& ids(const std::string& lang) const;
};

struct CurriculumDirection {
  std::string src, tgt;
  bool operator==(const CurriculumDirection& o) const {
    return src == o.src && tgt == o.tgt;
  }
};

// One training batch for a fixed direction. The negative matrices are filled
// by the trainer via sample_negatives; they are empty as produced here.
struct Batch {
  CurriculumDirection direction;
  TokenBatch src;                   // framed [<str>, tokens..., </s>]
  TokenBatch tgt_g;                 // decoder input [</s>, tokens...]
  std::vector<int> tgt_y;           // flat gold ids, PAD outside each row
  std::vector<std::size_t> pair_indices;  // original corpus line numbers
  std::vector<std::vector<int>> neg_ab, neg_ba;
};

// Reads `<lang> -> path` files plus an optional label file into an aligned,
// whitespace-normalized corpus. All files must agree on line counts; lines
// must be valid UTF-8 and nonempty after normalization.
ParallelCorpus load_parallel(const std::map<std::string, std::string>& paths,
                             const std::string& labels_path = "");

// Loads `<split>.<lang>.txt` (and `<split>.labels.txt` when present) from a
// corpus directory.
ParallelCorpus load_split(const std::string& dir, const std::string& split);

EncodedCorpus encode_corpus(const ParallelCorpus& corpus,
                            const Vocabulary& vocab);

// Direction schedule. Every non-pivot language feeds both pivots; each pivot
// feeds the other. Sources run in sorted order, pivots in the given order.
// The bilingual flag expects exactly two languages and yields both
// directions between them.
std::vector<CurriculumDirection> build_curriculum(
    const std::vector<std::string>& languages,
    const std::pair<std::string, std::string>& pivots, bool bilingual = false);

// Length-sorted greedy packing under a padded-token budget: a batch costs
// rows times its widest framed source row, and the batch closes rather than
// exceed max_tokens. Batch order (not content) is shuffled by epoch_seed.
std::vector<Batch> make_batches(const EncodedCorpus& corpus,
                                const CurriculumDirection& direction,
                                std::size_t max_tokens,
                                std::uint64_t epoch_seed);

// For each row, n_neg distinct uniform indices excluding the row itself;
// the two directions draw independently.
std::pair<std::vector<std::vector<int>>, std::vector<std::vector<int>>>
sample_negatives(std::size_t batch_size, std::size_t n_neg, Rng& rng);

// Framing helpers shared by training and evaluation.
TokenBatch frame_source_rows(const std::vector<std::vector<int>>& token_rows);
TokenBatch eos_front_rows(const std::vector<std::vector<int>>& token_rows);
std::vector<int> gold_rows_flat(const std::vector<std::vector<int>>& token_rows);

}  // namespace xlemb
