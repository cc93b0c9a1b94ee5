// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msat/tensor.hpp"

namespace msat {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: θ -= lr·wd·θ before the moment update
};

/// Moment buffers for one parameter.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update per parameter, then zeroes the gradients.
/// States are sized lazily on first use. Throws ContractError when a
/// parameter carries no gradient.
void adam_step(std::span<Tensor> params, std::span<AdamState> states, const AdamOptions& options);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step();
  void zero_grad();

  AdamOptions& options() { return options_; }
  std::span<Tensor> params() { return params_; }
  std::span<AdamState> states() { return states_; }
  std::span<const AdamState> states() const { return states_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  AdamOptions options_;
};

}  // namespace msat
