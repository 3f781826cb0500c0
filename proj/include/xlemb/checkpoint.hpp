#pragma once

#include <string>

#include "xlemb/config.hpp"
#include "xlemb/model.hpp"
#include "xlemb/optim.hpp"
#include "xlemb/tokenizer.hpp"

namespace xlemb {

// Everything needed to resume training or run inference: configs, the
// vocabulary (with its language table), step counters, parameters, and Adam
// moments. Single little-endian file: magic, JSON header, raw float32
// payload, trailing 64-bit checksum.
struct Checkpoint {
  ModelConfig model;
  TrainSettings train;
  LossConfig loss;
  Vocabulary vocab;
  std::size_t step = 0;
  std::size_t epoch = 0;
  ModelParams<float> params;
  AdamState<float> adam;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace xlemb
