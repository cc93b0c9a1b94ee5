// SPDX-License-Identifier: Apache-2.0
#include "msat/mcgn.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "msat/errors.hpp"
#include "msat/ops.hpp"

namespace msat {

ConceptVocab::ConceptVocab(std::vector<std::string> concepts) : concepts_(std::move(concepts)) {
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (!index_.emplace(concepts_[i], i).second) {
      throw ContractError("concept vocab: duplicate concept '" + concepts_[i] + "'");
    }
  }
}

ConceptVocab ConceptVocab::from_corpus(const std::vector<std::vector<std::string>>& reports, std::size_t k,
                                       const std::unordered_set<std::string>& excluded) {
  std::map<std::string, std::size_t> counts;
  for (const auto& report : reports)
    for (const auto& token : report)
      if (!excluded.count(token)) ++counts[token];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is lexicographic, so a stable sort on count keeps the tie order.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
  return ConceptVocab(std::move(out));
}

long ConceptVocab::find(const std::string& term) const {
  auto it = index_.find(term);
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

void ConceptVocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write concept file " + path.string());
  for (const auto& c : concepts_) os << c << '\n';
}

ConceptVocab ConceptVocab::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read concept file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  try {
    return ConceptVocab(std::move(lines));
  } catch (const ContractError& e) {
    throw FormatError("concept file " + path.string() + ": " + e.what());
  }
}

const std::unordered_set<std::string>& default_concept_stopwords() {
  static const std::unordered_set<std::string> words{
      "a",     "an",   "and",  "are",   "as",      "at",     "be",    "by",    "for",   "from",   "has",
      "have",  "in",   "is",   "it",    "its",     "no",     "not",   "of",    "on",    "or",     "seen",
      "that",  "the",  "there", "these", "this",   "to",     "was",   "were",  "with",  "without", "evidence",
      "noted", "present", "findings", "again", "also", "may", "which", "since", "than", "unchanged", "acute", "cardiopulmonary", "process"};
  return words;
}

std::vector<double> extract_concepts(const std::vector<std::string>& tokens, const ConceptVocab& vocab) {
  std::vector<double> y(vocab.size(), 0.0);
  for (const auto& t : tokens) {
    const long i = vocab.find(t);
    if (i >= 0) y[static_cast<std::size_t>(i)] = 1.0;
  }
  return y;
}

McgnParams McgnParams::init(std::size_t width, std::size_t channel_dim, std::size_t heads, std::size_t memory_slots,
                            std::size_t concepts, Rng& rng) {
  McgnParams p;
  p.msa = MsaParams::init(MsaDims::uniform(width, channel_dim, heads, memory_slots), rng);
  p.head = weight_param(rng, concepts, width);
  p.head_bias = constant_param({1, concepts}, 0.0);
  return p;
}

void McgnParams::register_params(ParameterSet& set, const std::string& prefix) const {
  msa.register_params(set, prefix + ".msa");
  set.add(prefix + ".head", head);
  set.add(prefix + ".head_bias", head_bias);
}

McgnOutput mcgn_forward(const EncoderState& state, std::size_t tap, const McgnParams& params, AttentionMode mode) {
  if (tap < 1 || tap > state.depth()) {
    throw ContractError("concept head: tap layer " + std::to_string(tap) + " outside [1, " +
                        std::to_string(state.depth()) + "]");
  }
  MsaOutput out =
      msa_forward(state.attended[tap - 1], state.keys[tap - 1], state.values[tap - 1], params.msa, mode);
  Tensor logits = linear(out.attended, params.head, params.head_bias);
  return {std::move(out.attended), std::move(logits)};
}

Tensor mlc_loss(const Tensor& logits, std::span<const double> targets) {
  for (double y : targets) {
    if (y != 0.0 && y != 1.0) throw ContractError("concept loss: target " + std::to_string(y) + " is not 0 or 1");
  }
  return sigmoid_bce_mean(logits, targets);
}

}  // namespace msat
