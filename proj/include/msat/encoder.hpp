// SPDX-License-Identifier: Apache-2.0
//
// Encoder stack. Layer m attends with the running query over the previous
// keys/values, then rewrites every row conditioned on the new query:
//
//   Q̂^(m) = MSA(Q̂^(m−1), K^(m−1), V^(m−1))
//   k_i^(m) = LN(relu(W_k [Q̂^(m); k_i^(m−1)] + b_k) + k_i^(m−1)), same for v_i
//
// Q̂^(0) = K^(0) row-mean, K^(0) = V^(0) = features. Memory slots belong to each
// layer's MSA block and never enter K^(m) or V^(m).

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "msat/checkpoint.hpp"
#include "msat/init.hpp"
#include "msat/msa.hpp"
#include "msat/tensor.hpp"

namespace msat {

struct EncoderLayerParams {
  MsaParams msa;
  Tensor key_update;  // D×2D
  Tensor key_update_bias;
  Tensor value_update;  // D×2D
  Tensor value_update_bias;
  Tensor key_norm_gain, key_norm_bias;
  Tensor value_norm_gain, value_norm_bias;

  static EncoderLayerParams init(std::size_t width, std::size_t channel_dim, std::size_t heads,
                                 std::size_t memory_slots, Rng& rng);
  void register_params(ParameterSet& set, const std::string& prefix) const;
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;

  static EncoderParams init(std::size_t layers, std::size_t width, std::size_t channel_dim, std::size_t heads,
                            std::size_t memory_slots, Rng& rng);
  void register_params(ParameterSet& set, const std::string& prefix) const;
};

struct EncoderState {
  std::vector<Tensor> keys;      // K^(0..m), each N×D
  std::vector<Tensor> values;    // V^(0..m)
  std::vector<Tensor> attended;  // Q̂^(0..m), each 1×D
  std::vector<double> sparsity;  // per layer 1..m

  std::size_t depth() const { return attended.size() - 1; }
};

EncoderState init_state(const Tensor& features);
/// Appends layer m = depth()+1 to `state`.
void encoder_layer(EncoderState& state, const EncoderLayerParams& params, AttentionMode mode);
EncoderState encode(const Tensor& features, const EncoderParams& params, AttentionMode mode);

}  // namespace msat
