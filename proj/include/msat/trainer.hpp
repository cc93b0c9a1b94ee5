// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch Adam training with global-norm clipping. Epoch e shuffles with
// seed + e, so a run restored from an epoch checkpoint replays the exact
// batches of an uninterrupted run.

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "msat/adam.hpp"
#include "msat/model.hpp"

namespace msat {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double ce = 0.0;        // sample means
  double mlc = 0.0;
  double total = 0.0;
  std::vector<double> step_losses;  // batch-mean total loss before each update
};

/// Learning rate for 1-based `epoch`.
double epoch_lr(const RunConfig& config, std::size_t epoch);

class Trainer {
 public:
  Trainer(const Model& model, const RunConfig& config);

  EpochStats train_epoch(std::span<const Sample> data);
  std::size_t epoch() const { return epoch_; }

  /// Parameters, Adam moments and counters.
  void save(const std::filesystem::path& path) const;
  void restore(const std::filesystem::path& path);

 private:
  const Model* model_;
  RunConfig config_;
  std::vector<std::string> names_;
  Adam adam_;
  std::size_t epoch_ = 0;
};

/// Appends "epoch,ce,mlc,total", writing the header first for a new file.
void append_loss_log(const std::filesystem::path& path, const EpochStats& stats);

}  // namespace msat
