// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>

#include "msat/tensor.hpp"

namespace msat {

using Rng = std::mt19937_64;

/// Trainable tensor with N(0, stddev²) entries.
inline Tensor normal_param(Rng& rng, Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

/// out×in weight scaled by 1/sqrt(in).
inline Tensor weight_param(Rng& rng, std::size_t out, std::size_t in) {
  return normal_param(rng, {out, in}, 1.0 / std::sqrt(static_cast<double>(in)));
}

inline Tensor constant_param(Shape shape, double value) { return Tensor::filled(std::move(shape), value, true); }

}  // namespace msat
