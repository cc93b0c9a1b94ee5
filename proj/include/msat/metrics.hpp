// SPDX-License-Identifier: Apache-2.0
//
// Corpus text-generation metrics over pre-tokenized sequences.
//   BLEU-n: clipped n-gram precision, geometric mean over 1..n, brevity
//           penalty against the closest reference length, no smoothing.
//   ROUGE-L: LCS F-measure with β = 1.2, best precision and recall over
//            references, averaged over samples.
//   CIDEr: TF-IDF n-gram cosine for n = 1..4, IDF = log(|corpus| / df) over
//          reference sets, averaged over n and references, scaled by 10.

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace msat {

using Tokens = std::vector<std::string>;

struct EvalPair {
  std::string id;
  Tokens candidate;
  std::vector<Tokens> references;
};

double bleu(std::span<const EvalPair> corpus, std::size_t n);
double rouge_l(std::span<const EvalPair> corpus);
double cider(std::span<const EvalPair> corpus);

/// Length of the longest common subsequence.
std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct MetricReport {
  std::array<double, 4> bleu{};  // BLEU-1..4
  double rouge_l = 0.0;
  double cider = 0.0;
};

MetricReport evaluate(std::span<const EvalPair> corpus);

/// F1 over every pooled (sample, label) decision, predicting positive when
/// probability >= threshold. Zero when there are no true or predicted positives.
double micro_f1(std::span<const std::vector<double>> probabilities, std::span<const std::vector<double>> targets,
                double threshold = 0.5);

}  // namespace msat
