#pragma once

#include <cstdint>
#include <string>

namespace xlemb {

// Pseudo-language corpus family: every language renders the same base-token
// document stream, so aligned lines are exact translations and the surface
// vocabularies never overlap across languages.
struct SynthSpec {
  std::size_t n_languages = 4;
  std::size_t base_vocab_size = 200;
  std::size_t n_classes = 4;
  std::size_t train_sentences = 2000;
  std::size_t dev_sentences = 200;
  std::size_t test_sentences = 400;
  std::size_t doc_len_min = 5;
  std::size_t doc_len_max = 15;
  double class_topic_skew = 1.2;  // log-normal spread of class unigram weights
  bool permute_within_window = false;  // per-language 3-token window reorder
  std::uint64_t seed = 0;

  void validate() const;
};

std::string serialize_spec(const SynthSpec& spec);
SynthSpec parse_spec(const std::string& json_text);

// Writes `<split>.<lang>.txt` for languages L0..L<K-1>, `<split>.labels.txt`,
// and a spec.json echo into out_dir. Output bytes are a pure function of the
// spec (seed included).
void generate_corpus(const SynthSpec& spec, const std::string& out_dir);

}  // namespace xlemb
