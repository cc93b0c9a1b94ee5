// SPDX-License-Identifier: Apache-2.0
//
// End-to-end synthetic run: generate data, build vocabularies from the
// training split, train, then score concepts and generated reports on the
// held-out split.

#pragma once

#include <functional>
#include <vector>

#include "msat/config.hpp"
#include "msat/data.hpp"
#include "msat/metrics.hpp"
#include "msat/trainer.hpp"

namespace msat {

struct ExperimentResult {
  std::vector<EpochStats> history;
  double micro_f1 = 0.0;  // zero without a concept head
  MetricReport metrics;
  double seconds = 0.0;
};

/// The first `train_samples` records of `data` train; the rest are held out.
/// `config.concepts` is overridden by the synthetic concept count.
ExperimentResult run_synthetic_experiment(RunConfig config, const SyntheticSpec& data, std::size_t train_samples,
                                          const std::function<void(const EpochStats&)>& on_epoch = {});

/// Generates every sample and pairs the output with its reference.
std::vector<EvalPair> generate_eval_pairs(const Model& model, const Vocab& vocab, std::span<const Sample> samples);

}  // namespace msat
