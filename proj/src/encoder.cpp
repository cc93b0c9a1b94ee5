// SPDX-License-Identifier: Apache-2.0
#include "msat/encoder.hpp"

#include "msat/errors.hpp"
#include "msat/ops.hpp"

namespace msat {

EncoderLayerParams EncoderLayerParams::init(std::size_t width, std::size_t channel_dim, std::size_t heads,
                                            std::size_t memory_slots, Rng& rng) {
  EncoderLayerParams p;
  p.msa = MsaParams::init(MsaDims::uniform(width, channel_dim, heads, memory_slots), rng);
  p.key_update = weight_param(rng, width, 2 * width);
  p.key_update_bias = constant_param({1, width}, 0.0);
  p.value_update = weight_param(rng, width, 2 * width);
  p.value_update_bias = constant_param({1, width}, 0.0);
  p.key_norm_gain = constant_param({1, width}, 1.0);
  p.key_norm_bias = constant_param({1, width}, 0.0);
  p.value_norm_gain = constant_param({1, width}, 1.0);
  p.value_norm_bias = constant_param({1, width}, 0.0);
  return p;
}

void EncoderLayerParams::register_params(ParameterSet& set, const std::string& prefix) const {
  msa.register_params(set, prefix + ".msa");
  set.add(prefix + ".key_update", key_update);
  set.add(prefix + ".key_update_bias", key_update_bias);
  set.add(prefix + ".value_update", value_update);
  set.add(prefix + ".value_update_bias", value_update_bias);
  set.add(prefix + ".key_norm_gain", key_norm_gain);
  set.add(prefix + ".key_norm_bias", key_norm_bias);
  set.add(prefix + ".value_norm_gain", value_norm_gain);
  set.add(prefix + ".value_norm_bias", value_norm_bias);
}

EncoderParams EncoderParams::init(std::size_t layers, std::size_t width, std::size_t channel_dim, std::size_t heads,
                                  std::size_t memory_slots, Rng& rng) {
  EncoderParams p;
  for (std::size_t m = 0; m < layers; ++m) {
    p.layers.push_back(EncoderLayerParams::init(width, channel_dim, heads, memory_slots, rng));
  }
  return p;
}

void EncoderParams::register_params(ParameterSet& set, const std::string& prefix) const {
  for (std::size_t m = 0; m < layers.size(); ++m) layers[m].register_params(set, prefix + "." + std::to_string(m + 1));
}

EncoderState init_state(const Tensor& features) {
  if (features.rank() != 2 || features.rows() == 0) {
    throw ContractError("encoder: features " + shape_string(features.shape()) + " must be a non-empty N×D matrix");
  }
  EncoderState s;
  s.keys.push_back(features);
  s.values.push_back(features);
  s.attended.push_back(mean_axis(features, 0));
  return s;
}

namespace {

Tensor update_rows(const Tensor& query, const Tensor& rows, const Tensor& weight, const Tensor& bias,
                   const Tensor& gain, const Tensor& norm_bias) {
  const Tensor parts[] = {repeat_rows(query, rows.rows()), rows};
  return layer_norm(add(relu(linear(concat(parts, 1), weight, bias)), rows), gain, norm_bias);
}

}  // namespace

void encoder_layer(EncoderState& state, const EncoderLayerParams& params, AttentionMode mode) {
  const Tensor& k = state.keys.back();
  const Tensor& v = state.values.back();
  MsaOutput out = msa_forward(state.attended.back(), k, v, params.msa, mode);
  Tensor next_k = update_rows(out.attended, k, params.key_update, params.key_update_bias, params.key_norm_gain,
                              params.key_norm_bias);
  Tensor next_v = update_rows(out.attended, v, params.value_update, params.value_update_bias,
                              params.value_norm_gain, params.value_norm_bias);
  state.keys.push_back(std::move(next_k));
  state.values.push_back(std::move(next_v));
  state.attended.push_back(std::move(out.attended));
  state.sparsity.push_back(out.sparsity_fraction);
}

EncoderState encode(const Tensor& features, const EncoderParams& params, AttentionMode mode) {
  EncoderState state = init_state(features);
  for (const auto& layer : params.layers) encoder_layer(state, layer, mode);
  return state;
}

}  // namespace msat
