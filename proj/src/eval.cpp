#include "xlemb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "json.hpp"
#include "xlemb/losses.hpp"
#include "xlemb/optim.hpp"
#include "xlemb/text_util.hpp"

namespace xlemb {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

std::uint32_t read_u32_le(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i]))
         << (8 * i);
  }
  return v;
}

double sq_dist(const float* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    s += diff * diff;
  }
  return s;
}

double row_norm(const float* a, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    s += static_cast<double>(a[k]) * static_cast<double>(a[k]);
  }
  return std::sqrt(s);
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string format_g(double x, int precision = 10) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

}  // namespace

EmbeddingMatrix embed_documents(const Checkpoint& ckpt,
                                const std::vector<std::string>& docs,
                                std::size_t max_doc_tokens,
                                const std::string& language) {
  if (docs.empty()) throw DataError("embed_documents: no documents");
  if (max_doc_tokens == 0) {
    throw DataError("embed_documents: max_doc_tokens must be positive");
  }

  std::vector<std::vector<int>> rows(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::vector<int> ids = encode(docs[i], ckpt.vocab);
    if (ids.empty()) {
      throw DataError("embed_documents: document " + std::to_string(i) +
                      " is empty");
    }
    if (ids.size() > max_doc_tokens) ids.resize(max_doc_tokens);
    rows[i] = std::move(ids);
  }

  EmbeddingMatrix out;
  out.n = docs.size();
  out.d = ckpt.model.d_model;
  out.values.assign(out.n * out.d, 0.0f);
  out.language = language;

  // Chunked in original order under a padded-token budget; padding is masked
  // inside the encoder, so grouping does not affect results.
  const std::size_t budget = 16384;
  std::size_t start = 0;
  while (start < rows.size()) {
    std::size_t end = start, width = 0;
    while (end < rows.size()) {
      const std::size_t len = rows[end].size() + 2;
      const std::size_t w = std::max(width, len);
      if (end > start && (end - start + 1) * w > budget) break;
      width = w;
      ++end;
    }
    std::vector<std::vector<int>> chunk(rows.begin() + start, rows.begin() + end);
    const TokenBatch batch = frame_source_rows(chunk);
    EncodeResult<float> enc =
        encode_batch(batch, ckpt.model, ckpt.params, nullptr, false);
    const std::vector<float>& p = enc.p.value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      for (std::size_t k = 0; k < out.d; ++k) {
        const float x = p[i * out.d + k];
        if (!std::isfinite(x)) {
          throw NumericError("embed_documents: non-finite embedding for "
                             "document " + std::to_string(start + i));
        }
        out.values[(start + i) * out.d + k] = x;
      }
    }
    start = end;
  }
  return out;
}

namespace {

struct ClassifierNet {
  Tensor<float> w1, b1, w2, b2;

  std::vector<std::pair<std::string, Tensor<float>>> named() {
    return {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
  }
};

Tensor<float> rows_tensor(const EmbeddingMatrix& emb,
                          const std::vector<std::size_t>& idx) {
  Tensor<float> x = Tensor<float>::zeros({idx.size(), emb.d});
  std::vector<float>& v = x.mutable_value();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::memcpy(v.data() + i * emb.d, emb.row(idx[i]), emb.d * sizeof(float));
  }
  return x;
}

double net_accuracy(ClassifierNet& net, const EmbeddingMatrix& emb,
                    const std::vector<int>& targets) {
  std::vector<std::size_t> all(emb.n);
  for (std::size_t i = 0; i < emb.n; ++i) all[i] = i;
  Tensor<float> logits =
      affine(relu(affine(rows_tensor(emb, all), net.w1, net.b1)), net.w2,
             net.b2);
  const std::vector<float>& lv = logits.value();
  const std::size_t c = logits.cols();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < emb.n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (lv[i * c + k] > lv[i * c + best]) best = k;
    }
    if (targets[i] >= 0 && best == static_cast<std::size_t>(targets[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(emb.n);
}

}  // namespace

Classifier train_classifier(const EmbeddingMatrix& train,
                            const EmbeddingMatrix& dev,
                            const EvalSettings& hyper) {
  hyper.validate();
  if (train.n == 0 || dev.n == 0) {
    throw DataError("train_classifier: empty embedding matrix");
  }
  if (train.d != dev.d) {
    throw ShapeError("train_classifier: train dim " + std::to_string(train.d) +
                     " vs dev dim " + std::to_string(dev.d));
  }
  if (!train.language.empty() && !dev.language.empty() &&
      train.language != dev.language) {
    throw DataError("train_classifier: train language '" + train.language +
                    "' but dev language '" + dev.language + "'");
  }
  if (train.labels.size() != train.n || dev.labels.size() != dev.n) {
    throw DataError("train_classifier: every row needs a label");
  }

  std::vector<std::string> classes(train.labels);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) {
    throw DataError("train_classifier: training data has a single class '" +
                    classes.front() + "'");
  }
  std::map<std::string, int> class_id;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    class_id[classes[k]] = static_cast<int>(k);
  }
  auto targets_of = [&](const std::vector<std::string>& labels) {
    std::vector<int> t(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto it = class_id.find(labels[i]);
      t[i] = it == class_id.end() ? -1 : it->second;
    }
    return t;
  };
  const std::vector<int> train_targets = targets_of(train.labels);
  const std::vector<int> dev_targets = targets_of(dev.labels);
  const std::size_t c = classes.size();

  const Rng root(hyper.seed);
  Rng init_rng = root.child("init");
  ClassifierNet net;
  net.w1 = detail::init_linear<float>(train.d, hyper.hidden, init_rng);
  net.b1 = Tensor<float>::zeros({hyper.hidden});
  net.w2 = detail::init_linear<float>(hyper.hidden, c, init_rng);
  net.b2 = Tensor<float>::zeros({c});
  auto params = net.named();
  for (auto& [name, p] : params) {
    (void)name;
    p.set_requires_grad(true);
  }
  AdamState<float> adam;
  adam.init_like(params);
  AdamHyper ah;
  ah.lr = hyper.lr;
  ah.beta1 = 0.9;
  ah.beta2 = 0.999;
  ah.eps = 1e-8;

  Classifier best;
  best.d_in = train.d;
  best.hidden = hyper.hidden;
  best.n_classes = c;
  best.classes = classes;
  best.dev_accuracy = -1.0;

  std::vector<std::size_t> order(train.n);
  for (std::size_t i = 0; i < train.n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    Rng shuffle_rng = root.child("shuffle", epoch);
    shuffle_rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += hyper.batch_size) {
      const std::size_t m = std::min(hyper.batch_size, order.size() - at);
      std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + m);
      std::vector<int> batch_targets(m);
      for (std::size_t i = 0; i < m; ++i) {
        batch_targets[i] = train_targets[idx[i]];
      }
      Tape<float> tape;
      Tensor<float> logits =
          affine(relu(affine(rows_tensor(train, idx), net.w1, net.b1)),
                 net.w2, net.b2);
      Tensor<float> loss = label_smoothed_nll(logits, batch_targets, 0.0, -1);
      tape.backward(loss);
      adam_step(params, adam, ah);
    }
    const double acc = net_accuracy(net, dev, dev_targets);
    if (acc > best.dev_accuracy) {
      best.dev_accuracy = acc;
      best.selected_epoch = epoch;
      best.w1 = net.w1.value();
      best.b1 = net.b1.value();
      best.w2 = net.w2.value();
      best.b2 = net.b2.value();
    }
  }
  return best;
}

std::vector<double> class_distribution(const Classifier& clf, const float* x) {
  std::vector<double> h(clf.hidden, 0.0);
  for (std::size_t j = 0; j < clf.hidden; ++j) {
    double s = static_cast<double>(clf.b1[j]);
    for (std::size_t k = 0; k < clf.d_in; ++k) {
      s += static_cast<double>(x[k]) *
           static_cast<double>(clf.w1[k * clf.hidden + j]);
    }
    h[j] = s > 0.0 ? s : 0.0;
  }
  std::vector<double> logits(clf.n_classes, 0.0);
  for (std::size_t j = 0; j < clf.n_classes; ++j) {
    double s = static_cast<double>(clf.b2[j]);
    for (std::size_t k = 0; k < clf.hidden; ++k) {
      s += h[k] * static_cast<double>(clf.w2[k * clf.n_classes + j]);
    }
    logits[j] = s;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
  return logits;
}

std::vector<std::string> classify(const Classifier& clf,
                                  const EmbeddingMatrix& emb) {
  if (emb.d != clf.d_in) {
    throw ShapeError("classify: embedding dim " + std::to_string(emb.d) +
                     " vs classifier input " + std::to_string(clf.d_in));
  }
  std::vector<std::string> out(emb.n);
  for (std::size_t i = 0; i < emb.n; ++i) {
    const std::vector<double> probs = class_distribution(clf, emb.row(i));
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    out[i] = clf.classes[best];
  }
  return out;
}

double accuracy_of(const Classifier& clf, const EmbeddingMatrix& emb) {
  if (emb.labels.size() != emb.n) {
    throw DataError("accuracy_of: rows without labels");
  }
  const std::vector<std::string> pred = classify(clf, emb);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < emb.n; ++i) {
    if (pred[i] == emb.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(emb.n);
}

AccuracyMatrix aggregate_accuracy(const std::vector<std::string>& languages,
                                  const std::vector<std::vector<double>>& cells) {
  const std::size_t l = languages.size();
  if (l == 0) throw DataError("aggregate_accuracy: no languages");
  if (cells.size() != l) {
    throw ShapeError("aggregate_accuracy: " + std::to_string(cells.size()) +
                     " rows for " + std::to_string(l) + " languages");
  }
  for (const auto& row : cells) {
    if (row.size() != l) {
      throw ShapeError("aggregate_accuracy: ragged cell grid");
    }
  }

  AccuracyMatrix acc;
  acc.languages = languages;
  acc.cells = cells;
  double diag = 0.0, off = 0.0, all = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    double row_off = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      all += cells[i][j];
      if (i == j) {
        diag += cells[i][j];
      } else {
        off += cells[i][j];
        row_off += cells[i][j];
      }
    }
    if (l > 1) {
      acc.x_cross.push_back(row_off / static_cast<double>(l - 1));
    }
  }
  acc.same = diag / static_cast<double>(l);
  acc.all = all / static_cast<double>(l * l);
  if (l > 1) {
    acc.cross = off / static_cast<double>(l * (l - 1));
  }
  return acc;
}

AccuracyMatrix zero_shot_matrix(const Checkpoint& ckpt,
                                const std::vector<std::string>& languages,
                                const DatasetAccessor& dataset,
                                const EvalSettings& hyper) {
  if (languages.empty()) throw DataError("zero_shot_matrix: no languages");
  {
    std::set<std::string> uniq(languages.begin(), languages.end());
    if (uniq.size() != languages.size()) {
      throw DataError("zero_shot_matrix: duplicate language in list");
    }
  }
  const std::size_t l = languages.size();
  const Rng root(hyper.seed);

  // Training phase: each classifier sees only its own language.
  std::vector<Classifier> classifiers;
  std::vector<std::set<std::string>> label_sets;
  for (const auto& lang : languages) {
    SplitDocs tr = dataset(lang, "train");
    SplitDocs dv = dataset(lang, "dev");
    if (tr.docs.size() != tr.labels.size() ||
        dv.docs.size() != dv.labels.size()) {
      throw DataError("zero_shot_matrix: '" + lang +
                      "' docs and labels are misaligned");
    }
    EmbeddingMatrix etr =
        embed_documents(ckpt, tr.docs, hyper.max_doc_tokens, lang);
    etr.labels = tr.labels;
    EmbeddingMatrix edv =
        embed_documents(ckpt, dv.docs, hyper.max_doc_tokens, lang);
    edv.labels = dv.labels;
    EvalSettings h = hyper;
    Rng seed_rng = root.child("classifier." + lang);
    h.seed = seed_rng.next_u64();
    classifiers.push_back(train_classifier(etr, edv, h));
    label_sets.emplace_back(tr.labels.begin(), tr.labels.end());
  }
  for (std::size_t i = 1; i < l; ++i) {
    if (label_sets[i] != label_sets[0]) {
      throw DataError("zero_shot_matrix: label sets differ between '" +
                      languages[0] + "' and '" + languages[i] + "'");
    }
  }

  // Test phase: embed each test set once, score every classifier on it.
  std::vector<std::vector<double>> cells(l, std::vector<double>(l, 0.0));
  for (std::size_t col = 0; col < l; ++col) {
    SplitDocs te = dataset(languages[col], "test");
    if (te.docs.size() != te.labels.size()) {
      throw DataError("zero_shot_matrix: '" + languages[col] +
                      "' test docs and labels are misaligned");
    }
    for (const auto& lab : te.labels) {
      if (label_sets[0].find(lab) == label_sets[0].end()) {
        throw DataError("zero_shot_matrix: test label '" + lab + "' in '" +
                        languages[col] + "' is outside the shared label set");
      }
    }
    EmbeddingMatrix ete =
        embed_documents(ckpt, te.docs, hyper.max_doc_tokens, languages[col]);
    ete.labels = te.labels;
    for (std::size_t row = 0; row < l; ++row) {
      cells[row][col] = accuracy_of(classifiers[row], ete);
    }
  }
  return aggregate_accuracy(languages, cells);
}

DistanceReport paired_distance_report(const Checkpoint& ckpt,
                                      const ParallelCorpus& corpus,
                                      double epsilon,
                                      std::size_t max_doc_tokens) {
  if (corpus.languages.size() < 2) {
    throw DataError("paired_distance_report: need at least 2 languages");
  }
  if (epsilon < 0.0) {
    throw ConfigError("paired_distance_report: epsilon must be nonnegative");
  }
  const std::size_t n = corpus.size();
  if (n == 0) throw DataError("paired_distance_report: empty corpus");

  std::map<std::string, EmbeddingMatrix> embs;
  double norm_sum = 0.0;
  for (const auto& lang : corpus.languages) {
    EmbeddingMatrix e =
        embed_documents(ckpt, corpus.lines(lang), max_doc_tokens, lang);
    for (std::size_t i = 0; i < e.n; ++i) norm_sum += row_norm(e.row(i), e.d);
    embs[lang] = std::move(e);
  }

  DistanceReport report;
  report.n_sentences = n;
  report.v_norm =
      norm_sum / static_cast<double>(n * corpus.languages.size());
  const double denom = report.v_norm + epsilon;

  for (std::size_t a = 0; a < corpus.languages.size(); ++a) {
    for (std::size_t b = a + 1; b < corpus.languages.size(); ++b) {
      const EmbeddingMatrix& ea = embs.at(corpus.languages[a]);
      const EmbeddingMatrix& eb = embs.at(corpus.languages[b]);
      PairStats stats;
      stats.lang_a = corpus.languages[a];
      stats.lang_b = corpus.languages[b];

      std::vector<double> dps(n);
      for (std::size_t i = 0; i < n; ++i) {
        dps[i] = sq_dist(ea.row(i), eb.row(i), ea.d) / denom;
      }
      stats.mean_d_p = 0.0;
      for (double v : dps) stats.mean_d_p += v;
      stats.mean_d_p /= static_cast<double>(n);
      stats.median_d_p = median_of(dps);

      // Nearest-neighbor retrieval, both directions. Ties keep the lowest
      // index, so constant embeddings score only on index 0.
      std::size_t hits = 0;
      auto run_direction = [&](const EmbeddingMatrix& q,
                               const EmbeddingMatrix& keys) {
        for (std::size_t i = 0; i < n; ++i) {
          std::size_t arg = 0;
          double best = sq_dist(q.row(i), keys.row(0), q.d);
          for (std::size_t j = 1; j < n; ++j) {
            const double dist = sq_dist(q.row(i), keys.row(j), q.d);
            if (dist < best) {
              best = dist;
              arg = j;
            }
          }
          if (arg == i) ++hits;
        }
      };
      run_direction(ea, eb);
      run_direction(eb, ea);
      stats.retrieval = static_cast<double>(hits) / static_cast<double>(2 * n);
      report.pairs.push_back(std::move(stats));
    }
  }
  for (const auto& p : report.pairs) report.mean_retrieval += p.retrieval;
  report.mean_retrieval /= static_cast<double>(report.pairs.size());
  return report;
}

Projection pca_project(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.d != b.d) {
    throw ShapeError("pca_project: dimension mismatch " + std::to_string(a.d) +
                     " vs " + std::to_string(b.d));
  }
  const std::size_t n = a.n + b.n, d = a.d;
  if (n < 2) throw DataError("pca_project: need at least 2 points");
  if (d < 2) throw DataError("pca_project: need dimension >= 2");

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t k = 0; k < d; ++k) x(i, k) = a.row(i)[k];
  }
  for (std::size_t i = 0; i < b.n; ++i) {
    for (std::size_t k = 0; k < d; ++k) x(a.n + i, k) = b.row(i)[k];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  const Eigen::MatrixXd cov =
      (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) {
    throw NumericError("pca_project: eigendecomposition failed");
  }
  const double v1 = es.eigenvalues()(d - 1);
  const double v2 = es.eigenvalues()(d - 2);
  if (!(v1 > 1e-24)) {
    throw NumericError(
        "pca_project: degenerate variance (all points identical?)");
  }
  auto fixed_sign = [&](Eigen::VectorXd e) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < d; ++k) {
      if (std::abs(e(k)) > std::abs(e(arg))) arg = k;
    }
    if (e(arg) < 0.0) e = -e;
    return e;
  };
  const Eigen::VectorXd e1 = fixed_sign(es.eigenvectors().col(d - 1));
  const Eigen::VectorXd e2 = fixed_sign(es.eigenvectors().col(d - 2));
  const Eigen::VectorXd c1 = x * e1;
  const Eigen::VectorXd c2 = x * e2;

  Projection proj;
  proj.var1 = v1;
  proj.var2 = std::max(v2, 0.0);
  for (std::size_t i = 0; i < a.n; ++i) proj.a.push_back({c1(i), c2(i)});
  for (std::size_t i = 0; i < b.n; ++i) {
    proj.b.push_back({c1(a.n + i), c2(a.n + i)});
  }
  return proj;
}

void write_projection_tsv(const Projection& proj, const std::string& path) {
  std::ostringstream os;
  os << "set\tindex\tx\ty\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < proj.a.size(); ++i) {
    os << "a\t" << i << "\t" << proj.a[i][0] << "\t" << proj.a[i][1] << "\n";
  }
  for (std::size_t i = 0; i < proj.b.size(); ++i) {
    os << "b\t" << i << "\t" << proj.b[i][0] << "\t" << proj.b[i][1] << "\n";
  }
  write_file(path, os.str());
}

void write_projection_svg(const Projection& proj, const std::string& path) {
  const double width = 640.0, height = 480.0, margin = 40.0;
  double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
  bool first = true;
  auto grow = [&](const std::array<double, 2>& p) {
    if (first) {
      min_x = max_x = p[0];
      min_y = max_y = p[1];
      first = false;
      return;
    }
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  };
  for (const auto& p : proj.a) grow(p);
  for (const auto& p : proj.b) grow(p);
  if (first) throw DataError("write_projection_svg: no points");
  if (max_x - min_x < 1e-12) {
    min_x -= 1.0;
    max_x += 1.0;
  }
  if (max_y - min_y < 1e-12) {
    min_y -= 1.0;
    max_y += 1.0;
  }
  auto px = [&](double x) {
    return margin + (x - min_x) / (max_x - min_x) * (width - 2.0 * margin);
  };
  auto py = [&](double y) {
    return height - margin -
           (y - min_y) / (max_y - min_y) * (height - 2.0 * margin);
  };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
     << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < proj.a.size(); ++i) {
    const double cx = px(proj.a[i][0]), cy = py(proj.a[i][1]);
    os << "<path d=\"M " << cx - 4 << " " << cy << " H " << cx + 4 << " M "
       << cx << " " << cy - 4 << " V " << cy + 4
       << "\" stroke=\"#1a6faf\" stroke-width=\"1.5\" fill=\"none\"/>\n";
    os << "<text x=\"" << cx + 5 << "\" y=\"" << cy - 5
       << "\" font-size=\"8\" fill=\"#1a6faf\">" << i << "</text>\n";
  }
  for (std::size_t i = 0; i < proj.b.size(); ++i) {
    const double cx = px(proj.b[i][0]), cy = py(proj.b[i][1]);
    os << "<path d=\"M " << cx - 4 << " " << cy << " H " << cx + 4
       << "\" stroke=\"#c0392b\" stroke-width=\"1.5\" fill=\"none\"/>\n";
    os << "<text x=\"" << cx + 5 << "\" y=\"" << cy + 10
       << "\" font-size=\"8\" fill=\"#c0392b\">" << i << "</text>\n";
  }
  os << "</svg>\n";
  write_file(path, os.str());
}

void write_embeddings(const EmbeddingMatrix& emb, const std::string& path) {
  if (emb.values.size() != emb.n * emb.d) {
    throw ShapeError("write_embeddings: " + std::to_string(emb.values.size()) +
                     " values for " + std::to_string(emb.n) + "x" +
                     std::to_string(emb.d));
  }
  if (!emb.labels.empty() && emb.labels.size() != emb.n) {
    throw ShapeError("write_embeddings: label count does not match rows");
  }
  for (float v : emb.values) {
    if (!std::isfinite(v)) {
      throw NumericError("write_embeddings: non-finite entry");
    }
  }
  std::string out;
  out.append(kEmbMagic, 4);
  append_u32_le(out, static_cast<std::uint32_t>(emb.n));
  append_u32_le(out, static_cast<std::uint32_t>(emb.d));
  for (float v : emb.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_u32_le(out, bits);
  }
  if (!emb.language.empty() || !emb.labels.empty()) {
    ordered_json footer;
    footer["language"] = emb.language;
    footer["labels"] = emb.labels;
    out += footer.dump();
  }
  write_file(path, out);
}

EmbeddingMatrix read_embeddings(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 12) {
    throw FormatError("embeddings: file too short: " + path);
  }
  if (std::memcmp(bytes.data(), kEmbMagic, 4) != 0) {
    throw FormatError("embeddings: bad magic bytes in " + path);
  }
  EmbeddingMatrix emb;
  emb.n = read_u32_le(bytes, 4);
  emb.d = read_u32_le(bytes, 8);
  const std::size_t need = 12 + emb.n * emb.d * 4;
  if (bytes.size() < need) {
    throw FormatError("embeddings: payload truncated (" +
                      std::to_string(bytes.size()) + " bytes, need " +
                      std::to_string(need) + "): " + path);
  }
  emb.values.resize(emb.n * emb.d);
  for (std::size_t i = 0; i < emb.values.size(); ++i) {
    const std::uint32_t bits = read_u32_le(bytes, 12 + 4 * i);
    std::memcpy(&emb.values[i], &bits, 4);
  }
  if (bytes.size() > need) {
    json footer;
    try {
      footer = json::parse(bytes.substr(need));
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("embeddings: bad footer: ") + e.what());
    }
    emb.language = footer.value("language", std::string());
    emb.labels = footer.value("labels", std::vector<std::string>());
    if (!emb.labels.empty() && emb.labels.size() != emb.n) {
      throw FormatError("embeddings: footer lists " +
                        std::to_string(emb.labels.size()) + " labels for " +
                        std::to_string(emb.n) + " rows");
    }
  }
  return emb;
}

std::string accuracy_matrix_to_json(const AccuracyMatrix& acc) {
  ordered_json j;
  j["languages"] = acc.languages;
  j["cells"] = acc.cells;
  j["x_cross"] = acc.x_cross;
  if (acc.cross.has_value()) {
    j["cross"] = *acc.cross;
  } else {
    j["cross"] = nullptr;
  }
  j["same"] = acc.same;
  j["all"] = acc.all;
  return j.dump(2) + "\n";
}

std::string accuracy_matrix_to_tsv(const AccuracyMatrix& acc) {
  std::ostringstream os;
  os << "train\\test";
  for (const auto& lang : acc.languages) os << "\t" << lang;
  if (!acc.x_cross.empty()) os << "\tX_cross";
  os << "\n";
  for (std::size_t i = 0; i < acc.languages.size(); ++i) {
    os << acc.languages[i];
    for (double v : acc.cells[i]) os << "\t" << format_g(v);
    if (!acc.x_cross.empty()) os << "\t" << format_g(acc.x_cross[i]);
    os << "\n";
  }
  if (acc.cross.has_value()) os << "cross\t" << format_g(*acc.cross) << "\n";
  os << "same\t" << format_g(acc.same) << "\n";
  os << "all\t" << format_g(acc.all) << "\n";
  return os.str();
}

}  // namespace xlemb
