#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlemb/losses.hpp"
#include "xlemb/model.hpp"
#include "xlemb/synth.hpp"

namespace xlemb {

struct TrainSettings {
  double base_lr = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  std::size_t warmup_steps = 4000;
  double weight_decay = 1e-4;
  double dropout_p = 0.3;
  double grad_clip = 0.0;  // 0 disables clipping
  std::size_t max_tokens = 2000;
  std::size_t n_epochs = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DataSettings {
  // Empty means "first two languages of the corpus in sorted order".
  std::vector<std::string> pivots;

  void validate() const;
};

struct EvalSettings {
  std::size_t hidden = 64;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t max_doc_tokens = 750;
  std::uint64_t seed = 0;

  void validate() const;
};

// One JSON document with sections model / train / loss / data / eval / synth.
// Unknown keys anywhere are rejected. Sections may be omitted; subcommands
// require the ones they use (seeds have no default and are mandatory within
// their section).
struct RunConfig {
  ModelConfig model;
  TrainSettings train;
  LossConfig loss;
  DataSettings data;
  EvalSettings eval;
  SynthSpec synth;

  bool has_model = false, has_train = false, has_loss = false;
  bool has_data = false, has_eval = false, has_synth = false;

  void require(const std::string& section) const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Section (de)serializers shared with the checkpoint container.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);
std::string train_settings_to_json(const TrainSettings& cfg);
TrainSettings train_settings_from_json(const std::string& text);
std::string loss_config_to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const std::string& text);

}  // namespace xlemb
