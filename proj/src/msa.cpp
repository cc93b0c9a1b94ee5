// SPDX-License-Identifier: Apache-2.0
#include "msat/msa.hpp"

#include <cmath>
#include <vector>

#include "msat/errors.hpp"
#include "msat/ops.hpp"

namespace msat {

const char* to_string(AttentionMode mode) {
  return mode == AttentionMode::SparseRelu ? "sparse_relu" : "softmax_baseline";
}

AttentionMode parse_attention_mode(const std::string& name) {
  if (name == "sparse_relu" || name == "sparse") return AttentionMode::SparseRelu;
  if (name == "softmax_baseline" || name == "softmax") return AttentionMode::SoftmaxBaseline;
  throw ContractError("unknown attention mode '" + name + "'");
}

MsaDims MsaDims::uniform(std::size_t width, std::size_t channel_dim, std::size_t heads, std::size_t memory_slots) {
  return MsaDims{width, width, width, width, channel_dim, heads, memory_slots};
}

void MsaDims::validate() const {
  if (query_dim == 0 || key_dim == 0 || value_dim == 0 || bilinear_dim == 0 || channel_dim == 0) {
    throw DimensionError("MSA dimensions must be positive");
  }
  if (heads == 0 || bilinear_dim % heads != 0 || channel_dim % heads != 0) {
    throw DimensionError("MSA: D_B=" + std::to_string(bilinear_dim) + " and D_c=" + std::to_string(channel_dim) +
                         " must both be divisible by H=" + std::to_string(heads));
  }
}

MsaParams MsaParams::init(const MsaDims& dims, Rng& rng) {
  dims.validate();
  MsaParams p;
  p.dims = dims;
  p.key_proj = weight_param(rng, dims.bilinear_dim, dims.key_dim);
  p.value_proj = weight_param(rng, dims.bilinear_dim, dims.value_dim);
  p.query_key_proj = weight_param(rng, dims.bilinear_dim, dims.query_dim);
  p.query_value_proj = weight_param(rng, dims.bilinear_dim, dims.query_dim);
  p.key_reduce = weight_param(rng, dims.channel_dim, dims.bilinear_dim);
  p.spatial_scorer =
      normal_param(rng, {1, dims.channel_dim}, 1.0 / std::sqrt(static_cast<double>(dims.channel_dim / dims.heads)));
  p.channel_proj = weight_param(rng, dims.bilinear_dim, dims.channel_dim);
  if (dims.memory_slots > 0) {
    p.memory_keys = normal_param(rng, {dims.memory_slots, dims.key_dim}, 1.0);
    p.memory_values = normal_param(rng, {dims.memory_slots, dims.value_dim}, 1.0);
  }
  p.norm_gain = constant_param({1, dims.bilinear_dim}, 1.0);
  p.norm_bias = constant_param({1, dims.bilinear_dim}, 0.0);
  return p;
}

void MsaParams::register_params(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".key_proj", key_proj);
  set.add(prefix + ".value_proj", value_proj);
  set.add(prefix + ".query_key_proj", query_key_proj);
  set.add(prefix + ".query_value_proj", query_value_proj);
  set.add(prefix + ".key_reduce", key_reduce);
  set.add(prefix + ".spatial_scorer", spatial_scorer);
  set.add(prefix + ".channel_proj", channel_proj);
  if (memory_keys.defined()) set.add(prefix + ".memory_keys", memory_keys);
  if (memory_values.defined()) set.add(prefix + ".memory_values", memory_values);
  set.add(prefix + ".norm_gain", norm_gain);
  set.add(prefix + ".norm_bias", norm_bias);
}

std::pair<Tensor, Tensor> extend_with_memory(const Tensor& keys, const Tensor& values, const MsaParams& params) {
  if (keys.rank() != 2 || values.rank() != 2 || keys.rows() != values.rows()) {
    throw DimensionError("MSA: keys " + shape_string(keys.shape()) + " and values " +
                         shape_string(values.shape()) + " must be matrices with equal row counts");
  }
  if (keys.cols() != params.dims.key_dim || values.cols() != params.dims.value_dim) {
    throw DimensionError("MSA: keys " + shape_string(keys.shape()) + " / values " + shape_string(values.shape()) +
                         " do not match memory widths " + std::to_string(params.dims.key_dim) + " / " +
                         std::to_string(params.dims.value_dim));
  }
  if (params.dims.memory_slots == 0) return {keys, values};
  std::vector<Tensor> k{keys, params.memory_keys};
  std::vector<Tensor> v{values, params.memory_values};
  return {concat(k, 0), concat(v, 0)};
}

Tensor bilinear_pool(const Tensor& query, const Tensor& rows, const Tensor& row_proj, const Tensor& query_proj) {
  return mul_row(relu(linear(rows, row_proj)), relu(linear(query, query_proj)));
}

SpatialAttention spatial_attention(const Tensor& pooled_keys, const MsaParams& params, AttentionMode mode) {
  Tensor reduced = relu(linear(pooled_keys, params.key_reduce));
  Tensor scores = grouped_row_dot(reduced, params.spatial_scorer, params.dims.heads);
  Tensor weights = mode == AttentionMode::SparseRelu ? relu(scores) : softmax_axis(scores, 0);
  return {std::move(weights), std::move(reduced)};
}

Tensor channel_gate(const Tensor& reduced_keys, const Tensor& channel_proj, std::size_t divisor) {
  const std::size_t rows = reduced_keys.rows();
  Tensor pooled = mean_axis(reduced_keys, 0);
  if (divisor != 0 && divisor != rows) {
    pooled = scale(pooled, static_cast<double>(rows) / static_cast<double>(divisor));
  }
  return sigmoid(linear(pooled, channel_proj));
}

ProjectedRows project_rows(const Tensor& keys, const Tensor& values, const MsaParams& params) {
  return {relu(linear(keys, params.key_proj)), relu(linear(values, params.value_proj))};
}

ProjectedRows project_memory(const MsaParams& params) {
  if (params.dims.memory_slots == 0) return {};
  ProjectedRows rows = project_rows(params.memory_keys, params.memory_values, params);
  rows.memory_rows = params.dims.memory_slots;
  return rows;
}

MsaOutput attend_projected(const Tensor& query, const ProjectedRows& rows, const MsaParams& params,
                           AttentionMode mode) {
  if (!rows.keys.defined() || rows.keys.rows() == 0) {
    throw ContractError("MSA: attention over an empty key set");
  }
  if (query.rank() != 2 || query.rows() != 1 || query.cols() != params.dims.query_dim) {
    throw DimensionError("MSA: query " + shape_string(query.shape()) + " is not a 1x" +
                         std::to_string(params.dims.query_dim) + " row");
  }

  Tensor pooled_keys = mul_row(rows.keys, relu(linear(query, params.query_key_proj)));
  Tensor pooled_values = mul_row(rows.values, relu(linear(query, params.query_value_proj)));
  SpatialAttention spatial = spatial_attention(pooled_keys, params, mode);
  const std::size_t total = rows.keys.rows();
  if (rows.memory_rows > total) throw ContractError("MSA: more memory rows than rows");
  const std::size_t inputs = total - rows.memory_rows;
  Tensor gate = channel_gate(spatial.reduced, params.channel_proj, inputs > 0 ? inputs : total);
  Tensor mixed = grouped_weighted_sum(spatial.weights, pooled_values);
  Tensor attended = mul(gate, layer_norm(mixed, params.norm_gain, params.norm_bias, 1e-5));

  std::size_t zeros = 0;
  for (double w : spatial.weights.values()) zeros += (w == 0.0);
  const double fraction = static_cast<double>(zeros) / static_cast<double>(spatial.weights.numel());
  return {std::move(attended), std::move(spatial.weights), std::move(gate), fraction};
}

MsaOutput msa_forward(const Tensor& query, const Tensor& keys, const Tensor& values, const MsaParams& params,
                      AttentionMode mode) {
  if (keys.rank() == 2 && keys.rows() + params.dims.memory_slots == 0) {
    throw ContractError("MSA: attention over an empty key set");
  }
  auto [ext_keys, ext_values] = extend_with_memory(keys, values, params);
  ProjectedRows rows = project_rows(ext_keys, ext_values, params);
  rows.memory_rows = params.dims.memory_slots;
  return attend_projected(query, rows, params, mode);
}

}  // namespace msat
