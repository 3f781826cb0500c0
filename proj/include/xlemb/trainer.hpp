#pragma once

#include <string>
#include <vector>

#include "xlemb/checkpoint.hpp"
#include "xlemb/config.hpp"
#include "xlemb/data.hpp"

namespace xlemb {

struct TrainJob {
  ModelConfig model;        // vocab_size / n_languages 0 means "derive"
  TrainSettings train;
  LossConfig loss;
  DataSettings data;
  bool bilingual = false;
  std::string resume_from;  // checkpoint path; empty starts fresh
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;  // one entry per epoch run here
  std::size_t steps = 0;                // global step count at the end
  std::string final_checkpoint;
  std::string log_path;
};

// Runs the full training loop: curriculum directions round-robin batch by
// batch, one Adam update per batch, a checkpoint at every epoch boundary
// (epoch_<k>.ckpt, plus final.ckpt), and an NDJSON log line per step.
// train.n_epochs is the total target, so resuming an interrupted run with
// the same config finishes the remaining epochs and reproduces the
// uninterrupted run exactly (timing fields aside).
TrainResult train(const TrainJob& job, const ParallelCorpus& corpus,
                  const Vocabulary& vocab, const std::string& out_dir);

}  // namespace xlemb
