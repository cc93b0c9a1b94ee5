// SPDX-License-Identifier: Apache-2.0
//
// Full report generator: encoder, optional concept head, decoder.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msat/config.hpp"
#include "msat/data.hpp"
#include "msat/decoder.hpp"
#include "msat/encoder.hpp"
#include "msat/mcgn.hpp"
#include "msat/vocab.hpp"

namespace msat {

/// One training or evaluation example.
struct Sample {
  std::string id;
  Tensor features;                  // N×D
  std::vector<std::size_t> input;   // BOS, w_1 … w_T
  std::vector<std::size_t> target;  // w_1 … w_T, EOS
  std::vector<double> concepts;     // K binary targets
  std::string report;               // normalized reference text
};

/// Joins features and reports on id, in feature-file order. Ids missing from
/// either side are a FormatError listing them.
std::vector<Sample> make_samples(std::span<const FeatureRecord> features, std::span<const ReportRecord> reports,
                                 const Vocab& vocab, const ConceptVocab& concepts);

class Model {
 public:
  Model(const RunConfig& config, std::size_t vocab_size, Rng& rng);

  const RunConfig& config() const { return config_; }
  const ParameterSet& params() const { return params_; }
  bool has_concept_head() const { return concept_head_.has_value(); }
  const McgnParams& concept_head() const { return *concept_head_; }

  struct Context {
    FusedContext fused;
    Tensor concept_logits;  // undefined without a concept head
  };
  Context encode(const Tensor& features) const;

  struct Losses {
    Tensor total, ce, mlc;
  };
  /// Teacher-forced losses for one sample. With a concept head the weighted
  /// concept loss stays in the graph even at λ_MLC = 0, so the head receives
  /// an exact zero gradient.
  Losses losses(const Sample& sample) const;

  /// Beam decoding with the configured width and length limit.
  Hypothesis generate(const Tensor& features) const;
  /// sigmoid of the concept logits; empty without a concept head.
  std::vector<double> concept_probabilities(const Tensor& features) const;

 private:
  RunConfig config_;
  EncoderParams encoder_;
  std::optional<McgnParams> concept_head_;
  DecoderParams decoder_;
  ParameterSet params_;
};

}  // namespace msat
