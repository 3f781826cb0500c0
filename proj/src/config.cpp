#include "xlemb/config.hpp"

#include <algorithm>

#include "json.hpp"
#include "xlemb/common.hpp"
#include "xlemb/text_util.hpp"

namespace xlemb {

using nlohmann::json;

void TrainSettings::validate() const {
  if (base_lr <= 0.0) {
    throw ConfigError("train.base_lr: must be positive, got " +
                      std::to_string(base_lr));
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0) {
    throw ConfigError("train.adam_beta1/adam_beta2: must be in [0, 1)");
  }
  if (adam_eps <= 0.0) {
    throw ConfigError("train.adam_eps: must be positive");
  }
  if (warmup_steps == 0) {
    throw ConfigError("train.warmup_steps: must be at least 1");
  }
  if (weight_decay < 0.0) {
    throw ConfigError("train.weight_decay: must be nonnegative");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("train.dropout_p: must be in [0, 1)");
  }
  if (grad_clip < 0.0) {
    throw ConfigError("train.grad_clip: must be nonnegative (0 disables)");
  }
  if (max_tokens == 0) {
    throw ConfigError("train.max_tokens: must be positive");
  }
}

void DataSettings::validate() const {
  if (!pivots.empty()) {
    if (pivots.size() != 2) {
      throw ConfigError("data.pivots: expected exactly 2 languages, got " +
                        std::to_string(pivots.size()));
    }
    if (pivots[0] == pivots[1]) {
      throw ConfigError("data.pivots: the two pivots must differ");
    }
  }
}

void EvalSettings::validate() const {
  if (hidden == 0) throw ConfigError("eval.hidden: must be positive");
  if (epochs == 0) throw ConfigError("eval.epochs: must be positive");
  if (batch_size == 0) throw ConfigError("eval.batch_size: must be positive");
  if (lr <= 0.0) throw ConfigError("eval.lr: must be positive");
  if (max_doc_tokens == 0) {
    throw ConfigError("eval.max_doc_tokens: must be positive");
  }
}

void RunConfig::require(const std::string& section) const {
  const bool ok = (section == "model" && has_model) ||
                  (section == "train" && has_train) ||
                  (section == "loss" && has_loss) ||
                  (section == "data" && has_data) ||
                  (section == "eval" && has_eval) ||
                  (section == "synth" && has_synth);
  if (!ok) {
    throw ConfigError("config: missing required section '" + section + "'");
  }
}

namespace {

// Strict key-by-key consumer: every read erases its key, and finish() rejects
// whatever is left, naming the stray key.
class Section {
 public:
  Section(json obj, std::string name) : obj_(std::move(obj)), name_(std::move(name)) {
    if (!obj_.is_object()) {
      throw ConfigError("config." + name_ + ": expected a JSON object");
    }
  }

  bool number(const std::string& key, double* out, bool required = false) {
    json v;
    if (!grab(key, &v, required)) return false;
    if (!v.is_number()) expected(key, "a number");
    *out = v.get<double>();
    return true;
  }

  bool unsigned_int(const std::string& key, std::size_t* out,
                    bool required = false) {
    json v;
    if (!grab(key, &v, required)) return false;
    if (!v.is_number_unsigned()) expected(key, "a nonnegative integer");
    *out = v.get<std::size_t>();
    return true;
  }

  bool u64(const std::string& key, std::uint64_t* out, bool required = false) {
    json v;
    if (!grab(key, &v, required)) return false;
    if (!v.is_number_unsigned()) expected(key, "a nonnegative integer");
    *out = v.get<std::uint64_t>();
    return true;
  }

  bool boolean(const std::string& key, bool* out, bool required = false) {
    json v;
    if (!grab(key, &v, required)) return false;
    if (!v.is_boolean()) expected(key, "a boolean");
    *out = v.get<bool>();
    return true;
  }

  bool string_list(const std::string& key, std::vector<std::string>* out,
                   bool required = false) {
    json v;
    if (!grab(key, &v, required)) return false;
    if (!v.is_array()) expected(key, "an array of strings");
    std::vector<std::string> items;
    for (const auto& e : v) {
      if (!e.is_string()) expected(key, "an array of strings");
      items.push_back(e.get<std::string>());
    }
    *out = std::move(items);
    return true;
  }

  bool contains(const std::string& key) const { return obj_.contains(key); }

  void finish() const {
    if (obj_.empty()) return;
    throw ConfigError("config." + name_ + ": unknown key '" +
                      obj_.begin().key() + "'");
  }

 private:
  bool grab(const std::string& key, json* v, bool required) {
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      if (required) {
        throw ConfigError("config." + name_ + "." + key +
                          ": required key is missing");
      }
      return false;
    }
    *v = *it;
    obj_.erase(it);
    return true;
  }

  [[noreturn]] void expected(const std::string& key, const std::string& what) {
    throw ConfigError("config." + name_ + "." + key + ": expected " + what);
  }

  json obj_;
  std::string name_;
};

ModelConfig parse_model_section(const json& j) {
  Section s(j, "model");
  ModelConfig cfg;
  s.unsigned_int("d_model", &cfg.d_model);
  s.unsigned_int("n_heads", &cfg.n_heads);
  s.unsigned_int("d_fc", &cfg.d_fc);
  s.unsigned_int("n_enc_layers", &cfg.n_enc_layers);
  s.unsigned_int("n_dec_layers", &cfg.n_dec_layers);
  s.unsigned_int("d_lang", &cfg.d_lang);
  s.unsigned_int("max_positions", &cfg.max_positions);
  s.unsigned_int("vocab_size", &cfg.vocab_size);      // 0 = derive from vocab
  s.unsigned_int("n_languages", &cfg.n_languages);    // 0 = derive from corpus
  s.finish();
  return cfg;
}

TrainSettings parse_train_section(const json& j) {
  Section s(j, "train");
  TrainSettings cfg;
  s.number("base_lr", &cfg.base_lr);
  s.number("adam_beta1", &cfg.adam_beta1);
  s.number("adam_beta2", &cfg.adam_beta2);
  s.number("adam_eps", &cfg.adam_eps);
  s.unsigned_int("warmup_steps", &cfg.warmup_steps);
  s.number("weight_decay", &cfg.weight_decay);
  s.number("dropout_p", &cfg.dropout_p);
  s.number("grad_clip", &cfg.grad_clip);
  s.unsigned_int("max_tokens", &cfg.max_tokens);
  s.unsigned_int("n_epochs", &cfg.n_epochs);
  s.u64("seed", &cfg.seed, /*required=*/true);
  s.finish();
  cfg.validate();
  return cfg;
}

LossConfig parse_loss_section(const json& j) {
  Section s(j, "loss");
  LossConfig cfg;
  const bool beta_given = s.contains("beta");
  const bool lambda_given = s.contains("lambda");
  s.number("alpha", &cfg.alpha);
  s.number("beta", &cfg.beta);
  s.number("lambda", &cfg.lambda);
  s.unsigned_int("n_neg", &cfg.n_neg);
  s.number("epsilon", &cfg.epsilon);
  s.number("label_smoothing", &cfg.label_smoothing);
  s.finish();
  if (beta_given && !lambda_given) cfg.lambda = cfg.beta / 2.0;
  cfg.validate();
  return cfg;
}

DataSettings parse_data_section(const json& j) {
  Section s(j, "data");
  DataSettings cfg;
  s.string_list("pivots", &cfg.pivots);
  s.finish();
  cfg.validate();
  return cfg;
}

EvalSettings parse_eval_section(const json& j) {
  Section s(j, "eval");
  EvalSettings cfg;
  s.unsigned_int("hidden", &cfg.hidden);
  s.unsigned_int("epochs", &cfg.epochs);
  s.unsigned_int("batch_size", &cfg.batch_size);
  s.number("lr", &cfg.lr);
  s.unsigned_int("max_doc_tokens", &cfg.max_doc_tokens);
  s.u64("seed", &cfg.seed, /*required=*/true);
  s.finish();
  cfg.validate();
  return cfg;
}

SynthSpec parse_synth_section(const json& j) {
  Section s(j, "synth");
  SynthSpec cfg;
  s.unsigned_int("n_languages", &cfg.n_languages);
  s.unsigned_int("base_vocab_size", &cfg.base_vocab_size);
  s.unsigned_int("n_classes", &cfg.n_classes);
  s.unsigned_int("train_sentences", &cfg.train_sentences);
  s.unsigned_int("dev_sentences", &cfg.dev_sentences);
  s.unsigned_int("test_sentences", &cfg.test_sentences);
  s.unsigned_int("doc_len_min", &cfg.doc_len_min);
  s.unsigned_int("doc_len_max", &cfg.doc_len_max);
  s.number("class_topic_skew", &cfg.class_topic_skew);
  s.boolean("permute_within_window", &cfg.permute_within_window);
  s.u64("seed", &cfg.seed, /*required=*/true);
  s.finish();
  cfg.validate();
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) {
    throw ConfigError("config: top level must be a JSON object");
  }
  RunConfig cfg;
  for (const auto& [key, value] : root.items()) {
    if (key == "model") {
      cfg.model = parse_model_section(value);
      cfg.has_model = true;
    } else if (key == "train") {
      cfg.train = parse_train_section(value);
      cfg.has_train = true;
    } else if (key == "loss") {
      cfg.loss = parse_loss_section(value);
      cfg.has_loss = true;
    } else if (key == "data") {
      cfg.data = parse_data_section(value);
      cfg.has_data = true;
    } else if (key == "eval") {
      cfg.eval = parse_eval_section(value);
      cfg.has_eval = true;
    } else if (key == "synth") {
      cfg.synth = parse_synth_section(value);
      cfg.has_synth = true;
    } else {
      throw ConfigError("config: unknown section '" + key +
                        "'; expected model, train, loss, data, eval, synth");
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file(path));
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["d_model"] = cfg.d_model;
  j["n_heads"] = cfg.n_heads;
  j["d_fc"] = cfg.d_fc;
  j["n_enc_layers"] = cfg.n_enc_layers;
  j["n_dec_layers"] = cfg.n_dec_layers;
  j["d_lang"] = cfg.d_lang;
  j["max_positions"] = cfg.max_positions;
  j["vocab_size"] = cfg.vocab_size;
  j["n_languages"] = cfg.n_languages;
  j["dropout_p"] = cfg.dropout_p;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<std::size_t>();
  cfg.n_heads = j.at("n_heads").get<std::size_t>();
  cfg.d_fc = j.at("d_fc").get<std::size_t>();
  cfg.n_enc_layers = j.at("n_enc_layers").get<std::size_t>();
  cfg.n_dec_layers = j.at("n_dec_layers").get<std::size_t>();
  cfg.d_lang = j.at("d_lang").get<std::size_t>();
  cfg.max_positions = j.at("max_positions").get<std::size_t>();
  cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
  cfg.n_languages = j.at("n_languages").get<std::size_t>();
  cfg.dropout_p = j.at("dropout_p").get<double>();
  return cfg;
}

std::string train_settings_to_json(const TrainSettings& cfg) {
  json j;
  j["base_lr"] = cfg.base_lr;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["warmup_steps"] = cfg.warmup_steps;
  j["weight_decay"] = cfg.weight_decay;
  j["dropout_p"] = cfg.dropout_p;
  j["grad_clip"] = cfg.grad_clip;
  j["max_tokens"] = cfg.max_tokens;
  j["n_epochs"] = cfg.n_epochs;
  j["seed"] = cfg.seed;
  return j.dump();
}

TrainSettings train_settings_from_json(const std::string& text) {
  json j = json::parse(text);
  TrainSettings cfg;
  cfg.base_lr = j.at("base_lr").get<double>();
  cfg.adam_beta1 = j.at("adam_beta1").get<double>();
  cfg.adam_beta2 = j.at("adam_beta2").get<double>();
  cfg.adam_eps = j.at("adam_eps").get<double>();
  cfg.warmup_steps = j.at("warmup_steps").get<std::size_t>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  cfg.dropout_p = j.at("dropout_p").get<double>();
  cfg.grad_clip = j.at("grad_clip").get<double>();
  cfg.max_tokens = j.at("max_tokens").get<std::size_t>();
  cfg.n_epochs = j.at("n_epochs").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

std::string loss_config_to_json(const LossConfig& cfg) {
  json j;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["lambda"] = cfg.lambda;
  j["n_neg"] = cfg.n_neg;
  j["epsilon"] = cfg.epsilon;
  j["label_smoothing"] = cfg.label_smoothing;
  return j.dump();
}

LossConfig loss_config_from_json(const std::string& text) {
  json j = json::parse(text);
  LossConfig cfg;
  cfg.alpha = j.at("alpha").get<double>();
  cfg.beta = j.at("beta").get<double>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.n_neg = j.at("n_neg").get<std::size_t>();
  cfg.epsilon = j.at("epsilon").get<double>();
  cfg.label_smoothing = j.at("label_smoothing").get<double>();
  return cfg;
}

}  // namespace xlemb
