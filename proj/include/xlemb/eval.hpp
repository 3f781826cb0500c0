#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xlemb/checkpoint.hpp"
#include "xlemb/config.hpp"
#include "xlemb/data.hpp"

namespace xlemb {

struct EmbeddingMatrix {
  std::size_t n = 0, d = 0;
  std::vector<float> values;  // row-major n x d
  std::string language;
  std::vector<std::string> labels;  // empty, or one per row

  const float* row(std::size_t i) const { return values.data() + i * d; }
};

// One-hidden-layer softmax classifier over document embeddings.
struct Classifier {
  std::size_t d_in = 0, hidden = 0, n_classes = 0;
  std::vector<float> w1, b1, w2, b2;  // d_in x hidden, hidden, hidden x C, C
  std::vector<std::string> classes;   // sorted; output index -> class name
  std::size_t selected_epoch = 0;     // 1-based epoch whose weights were kept
  double dev_accuracy = 0.0;
};

struct AccuracyMatrix {
  std::vector<std::string> languages;      // row = training language,
  std::vector<std::vector<double>> cells;  // column = test language
  std::vector<double> x_cross;             // per-row off-diagonal mean
  std::optional<double> cross;             // absent for a single language
  double same = 0.0;
  double all = 0.0;
};

struct PairStats {
  std::string lang_a, lang_b;
  double mean_d_p = 0.0, median_d_p = 0.0;
  double retrieval = 0.0;  // nearest-neighbor accuracy over both directions
};

struct DistanceReport {
  double v_norm = 0.0;  // mean embedding norm over everything evaluated
  std::size_t n_sentences = 0;
  std::vector<PairStats> pairs;
  double mean_retrieval = 0.0;
};

struct Projection {
  std::vector<std::array<double, 2>> a, b;  // 2D coordinates per input row
  double var1 = 0.0, var2 = 0.0;            // component variances
};

// Documents and labels for one (language, split) request; labels may be
// empty for unlabeled inputs.
struct SplitDocs {
  std::vector<std::string> docs, labels;
};

// zero_shot_matrix pulls data lazily through this, which lets tests verify
// that no foreign language's data is touched before the test phase.
using DatasetAccessor =
    std::function<SplitDocs(const std::string& language, const std::string& split)>;

// BPE-encodes each document, truncates to max_doc_tokens subwords, frames
// it, and runs the encoder with dropout off. Row i is the embedding of doc i.
EmbeddingMatrix embed_documents(const Checkpoint& ckpt,
                                const std::vector<std::string>& docs,
                                std::size_t max_doc_tokens = 750,
                                const std::string& language = "");

Classifier train_classifier(const EmbeddingMatrix& train,
                            const EmbeddingMatrix& dev,
                            const EvalSettings& hyper);

// Softmax class probabilities for one embedding row (sums to 1).
std::vector<double> class_distribution(const Classifier& clf, const float* x);

std::vector<std::string> classify(const Classifier& clf,
                                  const EmbeddingMatrix& emb);

double accuracy_of(const Classifier& clf, const EmbeddingMatrix& emb);

// Fills cross/same/all and X_cross from the raw cell grid.
AccuracyMatrix aggregate_accuracy(const std::vector<std::string>& languages,
                                  const std::vector<std::vector<double>>& cells);

// Trains one classifier per language on that language's own train/dev
// embeddings, then evaluates every classifier on every language's test set.
AccuracyMatrix zero_shot_matrix(const Checkpoint& ckpt,
                                const std::vector<std::string>& languages,
                                const DatasetAccessor& dataset,
                                const EvalSettings& hyper);

DistanceReport paired_distance_report(const Checkpoint& ckpt,
                                      const ParallelCorpus& corpus,
                                      double epsilon,
                                      std::size_t max_doc_tokens = 750);

// Joint PCA of both point sets onto the top two principal directions.
Projection pca_project(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

void write_projection_tsv(const Projection& proj, const std::string& path);
void write_projection_svg(const Projection& proj, const std::string& path);

void write_embeddings(const EmbeddingMatrix& emb, const std::string& path);
EmbeddingMatrix read_embeddings(const std::string& path);

std::string accuracy_matrix_to_json(const AccuracyMatrix& acc);
std::string accuracy_matrix_to_tsv(const AccuracyMatrix& acc);

}  // namespace xlemb
