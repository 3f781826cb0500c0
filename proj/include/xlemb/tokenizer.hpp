#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xlemb {

// Joint subword vocabulary over all languages. Ids are dense: reserved
// tokens first, then base symbols (sorted), then one token per merge in
// learned order. The language table is attached at training time (it is not
// part of the vocabulary file; checkpoints persist it).
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr int kStrTag = 3;
  static constexpr std::size_t kNumReserved = 4;

  std::vector<std::string> tokens;  // id -> token string
  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t n_base = 0;
  std::vector<std::string> languages;

  std::size_t size() const { return tokens.size(); }
  int id_of(const std::string& token) const {
    auto it = token_ids_.find(token);
    return it == token_ids_.end() ? -1 : it->second;
  }
  int language_id(const std::string& lang) const;
  void set_languages(std::vector<std::string> langs);
  void rebuild_index();

 private:
  std::unordered_map<std::string, int> token_ids_;
  std::unordered_map<std::string, int> lang_ids_;
};

// Greedy pair-frequency merges over whitespace-split words, with the
// end-of-word marker fused onto each word's final character. Frequency ties
// break toward the lexicographically smallest pair. Stops at target_vocab
// tokens or when no pair repeats.
Vocabulary learn_bpe(const std::vector<std::string>& corpus,
                     std::size_t target_vocab);

// Whitespace-normalizes, splits to words, applies merges in learned order.
// Symbols absent from the vocabulary (out-of-alphabet input) become UNK; no
// other reserved id ever appears in the output.
std::vector<int> encode(const std::string& text, const Vocabulary& vocab);

// Inverse of encode up to whitespace normalization; reserved ids are
// dropped. Throws on ids outside [0, V).
std::string decode(const std::vector<int>& ids, const Vocabulary& vocab);

std::string serialize_vocab(const Vocabulary& vocab);
Vocabulary parse_vocab(const std::string& text);
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace xlemb
