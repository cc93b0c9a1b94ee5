// SPDX-License-Identifier: Apache-2.0
//
// Step-time comparison of the two attention modes on a standalone attention
// block trained as a regressor. Runs alternate between modes, and the
// order flips every run, so slow drift in machine load hits both equally.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "msat/msa.hpp"

namespace msat {

struct BenchOptions {
  std::size_t width = 32;
  std::size_t channel_dim = 32;
  std::size_t heads = 2;
  std::size_t memory_slots = 3;
  std::size_t regions = 16;
  std::size_t batch = 16;
  std::size_t steps = 500;
  std::size_t warmup = 20;
  std::size_t runs = 3;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct BenchRun {
  AttentionMode mode = AttentionMode::SparseRelu;
  std::size_t run = 0;
  double mean_step_seconds = 0.0;
  double stddev_step_seconds = 0.0;
  double mean_sparsity = 0.0;  // zero fraction of the spatial weights
  double final_loss = 0.0;
  bool all_finite = true;
};

struct BenchSummary {
  double mean_step_seconds = 0.0;  // over every timed step of every run
  double stddev_step_seconds = 0.0;
  double mean_sparsity = 0.0;
  bool all_finite = true;
};

struct BenchReport {
  std::vector<BenchRun> runs;
  std::array<BenchSummary, 2> summary;  // indexed by mode: sparse, softmax

  const BenchSummary& sparse() const { return summary[0]; }
  const BenchSummary& softmax() const { return summary[1]; }
};

BenchReport run_bench(const BenchOptions& options);

/// One row per run, then one "all" row per mode.
void write_bench_csv(std::ostream& os, const BenchReport& report);

}  // namespace msat
