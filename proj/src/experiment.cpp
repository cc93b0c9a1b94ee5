// SPDX-License-Identifier: Apache-2.0
#include "msat/experiment.hpp"

#include <chrono>

#include "msat/errors.hpp"

namespace msat {

std::vector<EvalPair> generate_eval_pairs(const Model& model, const Vocab& vocab, std::span<const Sample> samples) {
  std::vector<EvalPair> pairs;
  pairs.reserve(samples.size());
  for (const Sample& s : samples) {
    const Hypothesis h = model.generate(s.features);
    pairs.push_back({s.id, tokenize(vocab.decode(h.tokens)), {tokenize(s.report)}});
  }
  return pairs;
}

ExperimentResult run_synthetic_experiment(RunConfig config, const SyntheticSpec& data, std::size_t train_samples,
                                          const std::function<void(const EpochStats&)>& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  if (train_samples == 0 || train_samples >= data.samples) {
    throw ContractError("experiment: need a nonempty training and held-out split of " + std::to_string(data.samples) +
                        " samples");
  }
  SyntheticDataset ds = generate_synthetic(data);
  std::vector<std::vector<std::string>> train_tokens;
  for (std::size_t i = 0; i < train_samples; ++i) train_tokens.push_back(tokenize(ds.reports[i].report));
  const Vocab vocab = Vocab::build(train_tokens, config.min_freq);
  std::vector<Sample> samples = make_samples(ds.features, ds.reports, vocab, ds.concepts);
  const std::span<const Sample> train(samples.data(), train_samples);
  const std::span<const Sample> test(samples.data() + train_samples, samples.size() - train_samples);

  config.concepts = ds.concepts.size();
  Rng rng(config.seed);
  Model model(config, vocab.size(), rng);
  Trainer trainer(model, config);
  ExperimentResult result;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    result.history.push_back(trainer.train_epoch(train));
    if (on_epoch) on_epoch(result.history.back());
  }

  if (model.has_concept_head()) {
    std::vector<std::vector<double>> probs, targets;
    for (const Sample& s : test) {
      probs.push_back(model.concept_probabilities(s.features));
      targets.push_back(s.concepts);
    }
    result.micro_f1 = micro_f1(probs, targets);
  }
  const auto pairs = generate_eval_pairs(model, vocab, test);
  result.metrics = evaluate(pairs);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace msat
