// SPDX-License-Identifier: Apache-2.0
//
// Concept head: a dedicated attention block over an intermediate encoder
// layer, followed by an affine map to K concept logits trained with a
// multi-label binary cross-entropy.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "msat/encoder.hpp"
#include "msat/msa.hpp"

namespace msat {

class ConceptVocab {
 public:
  ConceptVocab() = default;
  /// Index order = list order; duplicates are a contract error.
  explicit ConceptVocab(std::vector<std::string> concepts);

  /// The `k` most frequent tokens not in `excluded`, ties broken lexicographically.
  static ConceptVocab from_corpus(const std::vector<std::vector<std::string>>& reports, std::size_t k,
                                  const std::unordered_set<std::string>& excluded);

  std::size_t size() const { return concepts_.size(); }
  const std::vector<std::string>& concepts() const { return concepts_; }
  /// Index of `term`, or -1.
  long find(const std::string& term) const;

  /// One concept per line.
  void save(const std::filesystem::path& path) const;
  static ConceptVocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> concepts_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Function words skipped when ranking concept candidates.
const std::unordered_set<std::string>& default_concept_stopwords();

/// y[i] = 1 iff concept i occurs among `tokens`.
std::vector<double> extract_concepts(const std::vector<std::string>& tokens, const ConceptVocab& vocab);

struct McgnParams {
  MsaParams msa;
  Tensor head;       // K×D
  Tensor head_bias;  // 1×K

  static McgnParams init(std::size_t width, std::size_t channel_dim, std::size_t heads, std::size_t memory_slots,
                         std::size_t concepts, Rng& rng);
  void register_params(ParameterSet& set, const std::string& prefix) const;
};

struct McgnOutput {
  Tensor concept_feature;  // V_c, 1×D
  Tensor logits;           // 1×K
};

/// Attends with Q̂^(tap−1) over K^(tap−1), V^(tap−1); tap ∈ [1, depth].
McgnOutput mcgn_forward(const EncoderState& state, std::size_t tap, const McgnParams& params, AttentionMode mode);

/// Mean binary cross-entropy over the K logits; targets must be exactly 0 or 1.
Tensor mlc_loss(const Tensor& logits, std::span<const double> targets);

}  // namespace msat
