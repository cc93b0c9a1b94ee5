// SPDX-License-Identifier: Apache-2.0
#include "msat/decoder.hpp"

#include <cmath>

#include "msat/errors.hpp"
#include "msat/ops.hpp"

namespace msat {

DecoderLayerParams DecoderLayerParams::init(std::size_t width, std::size_t channel_dim, std::size_t heads,
                                            std::size_t memory_slots, Rng& rng) {
  DecoderLayerParams p;
  const MsaDims dims = MsaDims::uniform(width, channel_dim, heads, memory_slots);
  p.self_attn = MsaParams::init(dims, rng);
  p.cross_attn = MsaParams::init(dims, rng);
  p.self_norm_gain = constant_param({1, width}, 1.0);
  p.self_norm_bias = constant_param({1, width}, 0.0);
  p.cross_norm_gain = constant_param({1, width}, 1.0);
  p.cross_norm_bias = constant_param({1, width}, 0.0);
  return p;
}

void DecoderLayerParams::register_params(ParameterSet& set, const std::string& prefix) const {
  self_attn.register_params(set, prefix + ".self");
  cross_attn.register_params(set, prefix + ".cross");
  set.add(prefix + ".self_norm_gain", self_norm_gain);
  set.add(prefix + ".self_norm_bias", self_norm_bias);
  set.add(prefix + ".cross_norm_gain", cross_norm_gain);
  set.add(prefix + ".cross_norm_bias", cross_norm_bias);
}

DecoderParams DecoderParams::init(std::size_t vocab_size, std::size_t width, std::size_t channel_dim,
                                  std::size_t heads, std::size_t memory_slots, std::size_t encoder_layers,
                                  std::size_t decoder_layers, Rng& rng) {
  DecoderParams p;
  p.fusion = weight_param(rng, width, (encoder_layers + 1) * width);
  p.embedding = normal_param(rng, {vocab_size, width}, 1.0);
  for (std::size_t l = 0; l < decoder_layers; ++l) {
    p.layers.push_back(DecoderLayerParams::init(width, channel_dim, heads, memory_slots, rng));
  }
  p.output = weight_param(rng, vocab_size, width);
  p.output_bias = constant_param({1, vocab_size}, 0.0);
  return p;
}

void DecoderParams::register_params(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".fusion", fusion);
  set.add(prefix + ".embedding", embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].register_params(set, prefix + "." + std::to_string(l + 1));
  set.add(prefix + ".output", output);
  set.add(prefix + ".output_bias", output_bias);
}

FusedContext fuse(std::span<const Tensor> attended, const Tensor& concept_feature, const Tensor& fusion,
                  const Tensor& keys, const Tensor& values) {
  if (attended.empty()) throw DimensionError("fuse: no attended queries");
  const std::size_t width = attended[0].numel();
  if (fusion.rank() != 2 || fusion.cols() != attended.size() * width) {
    throw DimensionError("fuse: fusion weight " + shape_string(fusion.shape()) + " does not accept " +
                         std::to_string(attended.size()) + " queries of width " + std::to_string(width));
  }
  Tensor fused = linear(concat(attended, 1), fusion);
  if (concept_feature.defined()) fused = add(fused, concept_feature);
  return {std::move(fused), keys, values};
}

Tensor positional_encoding(std::size_t len, std::size_t width) {
  std::vector<double> v(len * width);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t i = 0; i < width; ++i) {
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      v[t * width + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return Tensor({len, width}, std::move(v));
}

namespace {

Tensor embed(std::span<const std::size_t> tokens, std::size_t offset, const DecoderParams& params) {
  for (std::size_t t : tokens) {
    if (t >= params.vocab_size()) {
      throw RangeError("decoder: token id " + std::to_string(t) + " outside vocab of " +
                       std::to_string(params.vocab_size()));
    }
  }
  Tensor pos = positional_encoding(offset + tokens.size(), params.width());
  if (offset > 0) pos = slice_rows(pos, offset, offset + tokens.size());
  return add(gather_rows(params.embedding, tokens), pos);
}

Tensor with_memory(std::vector<Tensor> parts, const Tensor& memory) {
  if (memory.defined()) parts.push_back(memory);
  return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

/// One position of one layer given its already-projected self rows.
Tensor layer_position(const Tensor& fused, const Tensor& x_t, const ProjectedRows& self_rows,
                      const ProjectedRows& cross_rows, const DecoderLayerParams& layer, AttentionMode mode) {
  Tensor a = attend_projected(add(fused, x_t), self_rows, layer.self_attn, mode).attended;
  Tensor h = layer_norm(add(x_t, a), layer.self_norm_gain, layer.self_norm_bias);
  Tensor c = attend_projected(h, cross_rows, layer.cross_attn, mode).attended;
  return layer_norm(add(h, c), layer.cross_norm_gain, layer.cross_norm_bias);
}

ProjectedRows cross_rows(const FusedContext& ctx, const MsaParams& params) {
  ProjectedRows rows = project_rows(ctx.keys, ctx.values, params);
  ProjectedRows mem = project_memory(params);
  rows.keys = with_memory({rows.keys}, mem.keys);
  rows.values = with_memory({rows.values}, mem.values);
  rows.memory_rows = mem.memory_rows;
  return rows;
}

}  // namespace

Tensor decoder_forward(const FusedContext& ctx, std::span<const std::size_t> tokens, const DecoderParams& params,
                       AttentionMode mode) {
  if (tokens.empty()) throw ContractError("decoder: empty token sequence");
  Tensor x = embed(tokens, 0, params);
  const std::size_t len = tokens.size();
  for (const auto& layer : params.layers) {
    ProjectedRows self = project_rows(x, x, layer.self_attn);
    ProjectedRows mem = project_memory(layer.self_attn);
    ProjectedRows cross = cross_rows(ctx, layer.cross_attn);
    std::vector<Tensor> out;
    out.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      ProjectedRows prefix{with_memory({slice_rows(self.keys, 0, t + 1)}, mem.keys),
                           with_memory({slice_rows(self.values, 0, t + 1)}, mem.values), mem.memory_rows};
      out.push_back(layer_position(ctx.fused, slice_rows(x, t, t + 1), prefix, cross, layer, mode));
    }
    x = concat(out, 0);
  }
  return linear(x, params.output, params.output_bias);
}

Tensor ce_loss(const Tensor& logits, std::span<const std::size_t> targets, std::size_t pad) {
  std::vector<bool> include(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) include[t] = targets[t] != pad;
  return softmax_cross_entropy(logits, targets, include);
}

Tensor total_loss(const Tensor& ce, const Tensor& mlc, double lambda_ce, double lambda_mlc) {
  if (lambda_ce < 0.0 || lambda_mlc < 0.0) throw ContractError("total loss: weights must be nonnegative");
  return add(scale(ce, lambda_ce), scale(mlc, lambda_mlc));
}

DecoderStepper::DecoderStepper(const FusedContext& ctx, const DecoderParams& params, AttentionMode mode)
    : ctx_(&ctx), params_(&params), mode_(mode) {
  for (const auto& layer : params.layers) {
    LayerCache cache;
    ProjectedRows mem = project_memory(layer.self_attn);
    if (mem.keys.defined()) {
      cache.keys.push_back(mem.keys);
      cache.values.push_back(mem.values);
    }
    cache.cross = cross_rows(ctx, layer.cross_attn);
    layers_.push_back(std::move(cache));
  }
}

std::vector<double> DecoderStepper::push(std::size_t token) {
  if (grad_enabled()) throw ContractError("decoder stepper: must run under NoGradGuard");
  const std::size_t ids[] = {token};
  Tensor x = embed(ids, length_, *params_);
  for (std::size_t l = 0; l < params_->layers.size(); ++l) {
    const auto& layer = params_->layers[l];
    auto& cache = layers_[l];
    ProjectedRows row = project_rows(x, x, layer.self_attn);
    // Keep memory rows last: insert the new row before them.
    const std::size_t mem = layer.self_attn.dims.memory_slots > 0 ? 1 : 0;
    cache.keys.insert(cache.keys.end() - static_cast<std::ptrdiff_t>(mem), row.keys);
    cache.values.insert(cache.values.end() - static_cast<std::ptrdiff_t>(mem), row.values);
    ProjectedRows prefix{concat(cache.keys, 0), concat(cache.values, 0), layer.self_attn.dims.memory_slots};
    x = layer_position(ctx_->fused, x, prefix, cache.cross, layer, mode_);
  }
  ++length_;
  Tensor logp = log_softmax_rows(linear(x, params_->output, params_->output_bias));
  return {logp.values().begin(), logp.values().end()};
}

}  // namespace msat
