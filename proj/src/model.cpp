// SPDX-License-Identifier: Apache-2.0
#include "msat/model.hpp"

#include <unordered_map>

#include "msat/errors.hpp"
#include "msat/ops.hpp"

namespace msat {

std::vector<Sample> make_samples(std::span<const FeatureRecord> features, std::span<const ReportRecord> reports,
                                 const Vocab& vocab, const ConceptVocab& concepts) {
  std::unordered_map<std::string, const ReportRecord*> by_id;
  for (const auto& r : reports) by_id[r.id] = &r;
  std::vector<Sample> out;
  std::string missing;
  std::unordered_map<std::string, bool> used;
  for (const auto& f : features) {
    auto it = by_id.find(f.id);
    if (it == by_id.end()) {
      missing += " " + f.id;
      continue;
    }
    used[f.id] = true;
    const auto tokens = tokenize(it->second->report);
    Sample s;
    s.id = f.id;
    s.features = f.features;
    s.input.push_back(Vocab::kBos);
    for (std::size_t id : vocab.encode(tokens)) {
      s.input.push_back(id);
      s.target.push_back(id);
    }
    s.target.push_back(Vocab::kEos);
    s.concepts = extract_concepts(tokens, concepts);
    for (const auto& t : tokens) s.report += (s.report.empty() ? "" : " ") + t;
    out.push_back(std::move(s));
  }
  for (const auto& r : reports)
    if (!used.count(r.id)) missing += " " + r.id;
  if (!missing.empty()) throw FormatError("ids present on only one side of features/reports:" + missing);
  return out;
}

Model::Model(const RunConfig& config, std::size_t vocab_size, Rng& rng) : config_(config) {
  config.validate();
  const std::size_t d = config.width;
  encoder_ = EncoderParams::init(config.encoder_layers, d, config.channel_dim, config.heads, config.memory_slots, rng);
  if (config.use_concepts) {
    concept_head_ = McgnParams::init(d, config.channel_dim, config.heads, config.memory_slots, config.concepts, rng);
  }
  decoder_ = DecoderParams::init(vocab_size, d, config.channel_dim, config.heads, config.memory_slots,
                                 config.encoder_layers, config.decoder_layers, rng);
  encoder_.register_params(params_, "encoder");
  if (concept_head_) concept_head_->register_params(params_, "concepts");
  decoder_.register_params(params_, "decoder");
}

Model::Context Model::encode(const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != config_.width) {
    throw DimensionError("model: features " + shape_string(features.shape()) + " do not have width " +
                         std::to_string(config_.width));
  }
  EncoderState state = msat::encode(features, encoder_, config_.attention);
  Context ctx;
  Tensor concept_feature;
  if (concept_head_) {
    McgnOutput out = mcgn_forward(state, config_.effective_tap(), *concept_head_, config_.attention);
    concept_feature = out.concept_feature;
    ctx.concept_logits = out.logits;
  }
  ctx.fused = fuse(state.attended, concept_feature, decoder_.fusion, state.keys.back(), state.values.back());
  return ctx;
}

Model::Losses Model::losses(const Sample& sample) const {
  Context ctx = encode(sample.features);
  Tensor logits = decoder_forward(ctx.fused, sample.input, decoder_, config_.attention);
  Losses l;
  l.ce = ce_loss(logits, sample.target, Vocab::kPad);
  l.mlc = concept_head_ ? mlc_loss(ctx.concept_logits, sample.concepts) : Tensor::scalar(0.0);
  l.total = total_loss(l.ce, l.mlc, config_.lambda_ce, config_.lambda_mlc);
  return l;
}

Hypothesis Model::generate(const Tensor& features) const {
  NoGradGuard no_grad;
  Context ctx = encode(features);
  DecoderStepper stepper(ctx.fused, decoder_, config_.attention);
  return beam_search(stepper, Vocab::kBos, Vocab::kEos, config_.beam, config_.max_len);
}

std::vector<double> Model::concept_probabilities(const Tensor& features) const {
  if (!concept_head_) return {};
  NoGradGuard no_grad;
  Tensor p = sigmoid(encode(features).concept_logits);
  return {p.values().begin(), p.values().end()};
}

}  // namespace msat
