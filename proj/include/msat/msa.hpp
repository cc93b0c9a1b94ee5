// SPDX-License-Identifier: Apache-2.0
//
// Memory-augmented sparse attention (MSA) block.
//
// A single query vector q attends over key/value rows extended with learned
// memory slots:
//
//   K̂ = [K; M_k],  V̂ = [V; M_v]
//   B_k = relu(K̂ W_kᵀ) ⊙ relu(W_qk q),   B_v = relu(V̂ W_vᵀ) ⊙ relu(W_qv q)
//   B́_k = relu(B_k W_Bkᵀ)                       (rows × D_c)
//   β_s[i, h] = relu(<B́_k[i, head h], w_s[head h]>)   (softmax over i in baseline mode)
//   β_c = sigmoid(W_c · Σ_i B́_k[i] / N)        (N input rows; n_m when N = 0)
//   Q̂ = β_c ⊙ LN(Σ_i β_s[i, head(j)] · B_v[i, j])
//
// Heads split the D_B and D_c channel axes into H contiguous groups; all
// projections inside the block are bias-free. Dividing the squeeze by the input
// row count keeps all-zero memory rows exactly transparent in sparse mode.

#pragma once

#include <cstddef>
#include <string>

#include "msat/checkpoint.hpp"
#include "msat/init.hpp"
#include "msat/tensor.hpp"

namespace msat {

enum class AttentionMode { SparseRelu, SoftmaxBaseline };

const char* to_string(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& name);

struct MsaDims {
  std::size_t query_dim = 0;
  std::size_t key_dim = 0;
  std::size_t value_dim = 0;
  std::size_t bilinear_dim = 0;  // D_B
  std::size_t channel_dim = 0;   // D_c
  std::size_t heads = 1;
  std::size_t memory_slots = 0;

  /// One model width for query, keys, values and the bilinear space.
  static MsaDims uniform(std::size_t width, std::size_t channel_dim, std::size_t heads, std::size_t memory_slots);
  void validate() const;
};

struct MsaParams {
  MsaDims dims;
  Tensor key_proj;          // W_k   D_B×D_k
  Tensor value_proj;        // W_v   D_B×D_v
  Tensor query_key_proj;    // W_qk  D_B×D_q
  Tensor query_value_proj;  // W_qv  D_B×D_q
  Tensor key_reduce;        // W_Bk  D_c×D_B
  Tensor spatial_scorer;    // 1×D_c, head h owns channels [h·D_c/H, (h+1)·D_c/H)
  Tensor channel_proj;      // W_c   D_B×D_c
  Tensor memory_keys;       // n_m×D_k, undefined when n_m = 0
  Tensor memory_values;     // n_m×D_v, undefined when n_m = 0
  Tensor norm_gain;         // 1×D_B
  Tensor norm_bias;         // 1×D_B

  static MsaParams init(const MsaDims& dims, Rng& rng);
  void register_params(ParameterSet& set, const std::string& prefix) const;
};

struct MsaOutput {
  Tensor attended;         // 1×D_B
  Tensor spatial_weights;  // (N+n_m)×H
  Tensor channel_gate;     // 1×D_B
  double sparsity_fraction = 0.0;
};

struct SpatialAttention {
  Tensor weights;  // β_s, rows×H
  Tensor reduced;  // B́_k, rows×D_c
};

/// Appends memory rows below the inputs.
std::pair<Tensor, Tensor> extend_with_memory(const Tensor& keys, const Tensor& values, const MsaParams& params);

/// relu(rows · W_xᵀ) ⊙ relu(W_q q), the query factor broadcast over rows.
Tensor bilinear_pool(const Tensor& query, const Tensor& rows, const Tensor& row_proj, const Tensor& query_proj);

SpatialAttention spatial_attention(const Tensor& pooled_keys, const MsaParams& params, AttentionMode mode);

/// sigmoid(W_c · Σ_i B́_k[i] / divisor) as a 1×D_B row. divisor = 0 means the row count.
Tensor channel_gate(const Tensor& reduced_keys, const Tensor& channel_proj, std::size_t divisor = 0);

/// Full block on raw keys and values.
MsaOutput msa_forward(const Tensor& query, const Tensor& keys, const Tensor& values, const MsaParams& params,
                      AttentionMode mode);

/// Query-independent halves of the bilinear pool, relu(X W_kᵀ) and relu(X W_vᵀ).
/// Lets a caller that issues many queries against overlapping rows (causal
/// decoding) project each row once.
struct ProjectedRows {
  Tensor keys;    // rows×D_B
  Tensor values;  // rows×D_B
  std::size_t memory_rows = 0;  // trailing rows that are memory slots
};

ProjectedRows project_rows(const Tensor& keys, const Tensor& values, const MsaParams& params);
/// Projections of the memory slots, all rows marked as memory; empty when n_m = 0.
ProjectedRows project_memory(const MsaParams& params);

/// Block output given already-projected rows (memory rows included).
MsaOutput attend_projected(const Tensor& query, const ProjectedRows& rows, const MsaParams& params,
                           AttentionMode mode);

}  // namespace msat
