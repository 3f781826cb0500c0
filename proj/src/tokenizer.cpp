#include "xlemb/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "xlemb/common.hpp"
#include "xlemb/text_util.hpp"

namespace xlemb {

namespace {

const char* kReservedNames[] = {"<pad>", "<unk>", "</s>", "<str>"};
constexpr const char* kEndMarker = "</w>";

// Word to initial symbol sequence: one symbol per code point, with the
// end-of-word marker fused onto the final one ("aa" -> {"a", "a</w>"}).
std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += kEndMarker;
  return syms;
}

// Single left-to-right pass replacing non-overlapping (left, right) pairs.
// Learning and encoding must share this exact rewrite rule.
void apply_merge(std::vector<std::string>& syms, const std::string& left,
                 const std::string& right) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == left && syms[r + 1] == right) {
      syms[w++] = left + right;
      r += 2;
    } else {
      if (w != r) syms[w] = std::move(syms[r]);
      ++w;
      ++r;
    }
  }
  syms.resize(w);
}

}  // namespace

int Vocabulary::language_id(const std::string& lang) const {
  auto it = lang_ids_.find(lang);
  if (it == lang_ids_.end()) {
    throw DataError("unknown language: " + lang);
  }
  return it->second;
}

void Vocabulary::set_languages(std::vector<std::string> langs) {
  languages = std::move(langs);
  lang_ids_.clear();
  for (std::size_t i = 0; i < languages.size(); ++i) {
    if (!lang_ids_.emplace(languages[i], static_cast<int>(i)).second) {
      throw DataError("duplicate language: " + languages[i]);
    }
  }
}

void Vocabulary::rebuild_index() {
  token_ids_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!token_ids_.emplace(tokens[i], static_cast<int>(i)).second) {
      throw DataError("duplicate token in vocabulary: " + tokens[i]);
    }
  }
  set_languages(languages);
}

Vocabulary learn_bpe(const std::vector<std::string>& corpus,
                     std::size_t target_vocab) {
  // Word frequency table over the normalized corpus.
  std::map<std::string, long> word_freq;
  for (const std::string& line : corpus) {
    for (const std::string& w : split_on_spaces(normalize_whitespace(line))) {
      ++word_freq[w];
    }
  }
  if (word_freq.empty()) {
    throw DataError("learn_bpe: corpus contains no words");
  }

  struct Word {
    std::vector<std::string> syms;
    long freq;
  };
  std::vector<Word> words;
  std::map<std::string, long> base_syms;  // sorted, deterministic id order
  for (const auto& [w, f] : word_freq) {
    Word entry{word_symbols(w), f};
    for (const auto& s : entry.syms) base_syms[s] += f;
    words.push_back(std::move(entry));
  }

  Vocabulary vocab;
  for (const char* r : kReservedNames) vocab.tokens.push_back(r);
  for (const auto& [s, f] : base_syms) vocab.tokens.push_back(s);
  vocab.n_base = base_syms.size();
  if (target_vocab < vocab.tokens.size()) {
    throw DataError("learn_bpe: target vocab " + std::to_string(target_vocab) +
                    " below minimum " + std::to_string(vocab.tokens.size()) +
                    " (reserved + base symbols)");
  }

  std::map<std::string, bool> known;
  for (const auto& t : vocab.tokens) known[t] = true;

  while (vocab.tokens.size() < target_vocab) {
    std::map<std::pair<std::string, std::string>, long> pair_freq;
    for (const Word& w : words) {
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
        pair_freq[{w.syms[i], w.syms[i + 1]}] += w.freq;
      }
    }
    // Most frequent pair; ties break toward the lexicographically smallest,
    // which is the first candidate in this sorted map. Pairs whose
    // concatenation is already a token are skipped: every merge must add
    // exactly one fresh id.
    std::pair<std::string, std::string> best;
    long best_freq = 0;
    for (const auto& [pair, freq] : pair_freq) {
      if (freq < 2 || freq <= best_freq) continue;
      if (known.count(pair.first + pair.second)) continue;
      best = pair;
      best_freq = freq;
    }
    if (best_freq == 0) break;
    const auto& [left, right] = best;
    for (Word& w : words) apply_merge(w.syms, left, right);
    vocab.tokens.push_back(left + right);
    known[left + right] = true;
    vocab.merges.emplace_back(left, right);
  }

  vocab.rebuild_index();
  return vocab;
}

std::vector<int> encode(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const std::string& w : split_on_spaces(normalize_whitespace(text))) {
    std::vector<std::string> syms = word_symbols(w);
    for (const auto& [l, r] : vocab.merges) apply_merge(syms, l, r);
    for (const auto& s : syms) {
      int id = vocab.id_of(s);
      ids.push_back(id < 0 ? Vocabulary::kUnk : id);
    }
  }
  return ids;
}

std::string decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw DataError("decode: id " + std::to_string(id) +
                      " outside vocabulary of size " +
                      std::to_string(vocab.size()));
    }
    if (static_cast<std::size_t>(id) < Vocabulary::kNumReserved) continue;
    std::string tok = vocab.tokens[id];
    const std::string marker = "</w>";
    bool word_end = tok.size() >= marker.size() &&
                    tok.compare(tok.size() - marker.size(), marker.size(),
                                marker) == 0;
    if (word_end) tok.resize(tok.size() - marker.size());
    out += tok;
    if (word_end) out += ' ';
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string serialize_vocab(const Vocabulary& vocab) {
  std::string out = "BPEV1 " + std::to_string(vocab.size()) + "\n";
  for (std::size_t i = 0; i < Vocabulary::kNumReserved + vocab.n_base; ++i) {
    out += vocab.tokens[i];
    out += '\n';
  }
  for (const auto& [l, r] : vocab.merges) {
    out += l;
    out += ' ';
    out += r;
    out += '\n';
  }
  return out;
}

Vocabulary parse_vocab(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines[0].rfind("BPEV1 ", 0) != 0) {
    throw FormatError("vocabulary file: missing BPEV1 header");
  }
  std::size_t declared = 0;
  try {
    declared = std::stoul(lines[0].substr(6));
  } catch (const std::exception&) {
    throw FormatError("vocabulary file: bad size in header: " + lines[0]);
  }

  Vocabulary vocab;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    std::size_t space = line.find(' ');
    if (space == std::string::npos) {
      if (!vocab.merges.empty()) {
        throw FormatError("vocabulary file: base symbol after merges at line " +
                          std::to_string(i + 1));
      }
      vocab.tokens.push_back(line);
    } else {
      std::string l = line.substr(0, space);
      std::string r = line.substr(space + 1);
      vocab.merges.emplace_back(l, r);
      vocab.tokens.push_back(l + r);
    }
  }
  if (vocab.tokens.size() < Vocabulary::kNumReserved) {
    throw FormatError("vocabulary file: fewer lines than reserved tokens");
  }
  for (std::size_t i = 0; i < Vocabulary::kNumReserved; ++i) {
    if (vocab.tokens[i] != kReservedNames[i]) {
      throw FormatError("vocabulary file: reserved token " + std::to_string(i) +
                        " is '" + vocab.tokens[i] + "', expected '" +
                        kReservedNames[i] + "'");
    }
  }
  vocab.n_base =
      vocab.tokens.size() - Vocabulary::kNumReserved - vocab.merges.size();
  if (vocab.size() != declared) {
    throw FormatError("vocabulary file: header declares " +
                      std::to_string(declared) + " tokens, found " +
                      std::to_string(vocab.size()));
  }
  vocab.rebuild_index();
  return vocab;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  write_file(path, serialize_vocab(vocab));
}

Vocabulary load_vocab(const std::string& path) {
  return parse_vocab(read_file(path));
}

}  // namespace xlemb
