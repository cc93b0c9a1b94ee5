// SPDX-License-Identifier: Apache-2.0
#include "msat/adam.hpp"

#include <cmath>

#include "msat/errors.hpp"

namespace msat {

void adam_step(std::span<Tensor> params, std::span<AdamState> states, const AdamOptions& options) {
  if (params.size() != states.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " params but " +
                        std::to_string(states.size()) + " optimizer states");
  }
  for (const Tensor& p : params) {
    if (!p.has_grad()) throw ContractError("adam_step: parameter of shape " + shape_string(p.shape()) + " has no gradient");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    AdamState& s = states[k];
    const std::size_t n = p.numel();
    if (s.first_moment.size() != n) {
      s.first_moment.assign(n, 0.0);
      s.second_moment.assign(n, 0.0);
    }
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(options.beta1, t);
    const double c2 = 1.0 - std::pow(options.beta2, t);
    auto value = p.values_mut();
    auto grad = p.grad_mut();
    const double shrink = 1.0 - options.lr * options.weight_decay;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i];
      s.first_moment[i] = options.beta1 * s.first_moment[i] + (1.0 - options.beta1) * g;
      s.second_moment[i] = options.beta2 * s.second_moment[i] + (1.0 - options.beta2) * g * g;
      const double m_hat = s.first_moment[i] / c1;
      const double v_hat = s.second_moment[i] / c2;
      value[i] = shrink * value[i] - options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
    p.zero_grad();
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.grad_mut()) g *= factor;
    }
  }
  return norm;
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), states_(params_.size()), options_(options) {}

void Adam::step() { adam_step(params_, states_, options_); }

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace msat
