// SPDX-License-Identifier: Apache-2.0
//
// Report decoder. The fused context
//
//   v_f = W_f [Q̂^(0); …; Q̂^(M)] + V_c
//
// is added to every position's input before causal self-attention. Each layer l
// maps x^(l−1) to x^(l) position-wise:
//
//   a_t = MSA_self(v_f + x_t, rows x_0..x_t)      h_t = LN(x_t + a_t)
//   c_t = MSA_cross(h_t, K^(M), V^(M))            x^(l)_t = LN(h_t + c_t)
//
// with x^(0)_t = E(w_t) + P(t). Both blocks carry their own memory slots.
// Logits are an affine map of the last layer.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msat/checkpoint.hpp"
#include "msat/errors.hpp"
#include "msat/init.hpp"
#include "msat/msa.hpp"
#include "msat/tensor.hpp"

namespace msat {

struct DecoderLayerParams {
  MsaParams self_attn;
  MsaParams cross_attn;
  Tensor self_norm_gain, self_norm_bias;
  Tensor cross_norm_gain, cross_norm_bias;

  static DecoderLayerParams init(std::size_t width, std::size_t channel_dim, std::size_t heads,
                                 std::size_t memory_slots, Rng& rng);
  void register_params(ParameterSet& set, const std::string& prefix) const;
};

struct DecoderParams {
  Tensor fusion;     // D×((M+1)·D)
  Tensor embedding;  // |V|×D
  std::vector<DecoderLayerParams> layers;
  Tensor output;       // |V|×D
  Tensor output_bias;  // 1×|V|

  static DecoderParams init(std::size_t vocab_size, std::size_t width, std::size_t channel_dim, std::size_t heads,
                            std::size_t memory_slots, std::size_t encoder_layers, std::size_t decoder_layers,
                            Rng& rng);
  void register_params(ParameterSet& set, const std::string& prefix) const;
  std::size_t width() const { return embedding.cols(); }
  std::size_t vocab_size() const { return embedding.rows(); }
};

struct FusedContext {
  Tensor fused;   // v_f, 1×D
  Tensor keys;    // K^(M), N×D
  Tensor values;  // V^(M), N×D
};

/// `concept_feature` may be undefined (no concept head).
FusedContext fuse(std::span<const Tensor> attended, const Tensor& concept_feature, const Tensor& fusion,
                  const Tensor& keys, const Tensor& values);

/// Sinusoidal table, len×width, constant.
Tensor positional_encoding(std::size_t len, std::size_t width);

/// Teacher-forced logits, T×|V|.
Tensor decoder_forward(const FusedContext& ctx, std::span<const std::size_t> tokens, const DecoderParams& params,
                       AttentionMode mode);

/// Mean of −log softmax(logits)[target] over positions whose target is not `pad`.
Tensor ce_loss(const Tensor& logits, std::span<const std::size_t> targets, std::size_t pad);

Tensor total_loss(const Tensor& ce, const Tensor& mlc, double lambda_ce, double lambda_mlc);

/// Incremental inference: consumes one token at a time, caching each layer's
/// projected rows. Must be used without gradient recording.
class DecoderStepper {
 public:
  DecoderStepper(const FusedContext& ctx, const DecoderParams& params, AttentionMode mode);

  /// Appends `token` and returns log-probabilities for the next position.
  std::vector<double> push(std::size_t token);
  std::size_t length() const { return length_; }

 private:
  struct LayerCache {
    std::vector<Tensor> keys, values;  // projected rows, one per position, memory last
    ProjectedRows cross;
  };
  const FusedContext* ctx_;
  const DecoderParams* params_;
  AttentionMode mode_;
  std::vector<LayerCache> layers_;
  std::size_t length_ = 0;
};

struct Hypothesis {
  std::vector<std::size_t> tokens;  // generated tokens, EOS included when emitted
  double logprob = 0.0;
  bool finished = false;
};

namespace detail {
inline bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end());
}
}  // namespace detail

/// Beam search over any copyable `State` with `std::vector<double> push(token)`
/// returning next-token log-probabilities. Scores are unnormalized sums; a
/// hypothesis freezes on `eos` or at `max_len` tokens. Ties go to the
/// lexicographically smaller token sequence.
template <class State>
Hypothesis beam_search(State initial, std::size_t bos, std::size_t eos, std::size_t beam, std::size_t max_len) {
  if (beam == 0 || max_len == 0) throw ContractError("beam search: beam width and max length must be positive");
  struct Live {
    Hypothesis hyp;
    State state;
    std::vector<double> next;
  };
  std::vector<Live> beams;
  {
    std::vector<double> first = initial.push(bos);
    beams.push_back({Hypothesis{}, std::move(initial), std::move(first)});
  }
  while (true) {
    bool any_active = false;
    for (const auto& b : beams) any_active |= !b.hyp.finished;
    if (!any_active) break;

    struct Candidate {
      Hypothesis hyp;
      std::size_t parent;
    };
    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < beams.size(); ++p) {
      const auto& b = beams[p];
      if (b.hyp.finished) {
        cands.push_back({b.hyp, p});
        continue;
      }
      for (std::size_t v = 0; v < b.next.size(); ++v) {
        Hypothesis h = b.hyp;
        h.tokens.push_back(v);
        h.logprob += b.next[v];
        h.finished = v == eos || h.tokens.size() >= max_len;
        cands.push_back({std::move(h), p});
      }
    }
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) { return detail::better(a.hyp, b.hyp); });
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      auto& c = cands[i];
      const Live& parent = beams[c.parent];
      if (c.hyp.finished) {
        next.push_back({std::move(c.hyp), parent.state, {}});
      } else {
        State s = parent.state;
        std::vector<double> dist = s.push(c.hyp.tokens.back());
        next.push_back({std::move(c.hyp), std::move(s), std::move(dist)});
      }
    }
    beams = std::move(next);
  }
  return std::min_element(beams.begin(), beams.end(),
                          [](const Live& a, const Live& b) { return detail::better(a.hyp, b.hyp); })
      ->hyp;
}

/// Argmax decoding, lowest id on ties.
template <class State>
Hypothesis greedy_decode(State state, std::size_t bos, std::size_t eos, std::size_t max_len) {
  Hypothesis h;
  std::vector<double> dist = state.push(bos);
  while (!h.finished) {
    const std::size_t v =
        static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    h.tokens.push_back(v);
    h.logprob += dist[v];
    h.finished = v == eos || h.tokens.size() >= max_len;
    if (!h.finished) dist = state.push(v);
  }
  return h;
}

}  // namespace msat
