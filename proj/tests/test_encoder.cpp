// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "msat/encoder.hpp"
#include "msat/errors.hpp"
#include "msat/ops.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/lift.hpp"

using namespace msat;
using namespace msat::testing;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("initial state is the row mean") {
  auto s = init_state(Tensor::matrix(2, 2, {2, 4, 6, 8}));
  CHECK(s.attended[0].values()[0] == 4.0);
  CHECK(s.attended[0].values()[1] == 6.0);
  CHECK(s.depth() == 0);

  auto single = init_state(Tensor::row({1.5, -2, 7}));
  CHECK(max_abs_diff(single.attended[0].values(), std::vector<double>{1.5, -2, 7}) == 0.0);

  CHECK_THROWS_AS(init_state(Tensor(Shape{0, 4})), ContractError);
}

TEST_CASE("initial query of 196x16 features matches a scalar sum") {
  Rng rng(0);
  auto f = random_tensor(rng, {196, 16});
  auto s = init_state(f);
  Vec<double> ref = scalar_row_mean(Vec<double>(f.values().begin(), f.values().end()), 196, 16);
  CHECK(max_abs_diff(s.attended[0].values(), ref) < 1e-12);
}

TEST_CASE("dead update branch reduces to a normalized residual") {
  Rng rng(1);
  auto p = EncoderParams::init(1, 4, 4, 2, 3, rng);
  auto& layer = p.layers[0];
  layer.key_update = Tensor(Shape{4, 8}, true);
  layer.key_update_bias = Tensor::filled({1, 4}, -1.0, true);
  auto f = random_tensor(rng, {3, 4});
  auto s = encode(f, p, AttentionMode::SparseRelu);
  auto expected = layer_norm(f, layer.key_norm_gain, layer.key_norm_bias);
  CHECK(max_abs_diff(s.keys[1].values(), expected.values()) < 1e-15);
}

TEST_CASE("duplicate rows stay duplicates through every layer") {
  Rng rng(2);
  auto p = EncoderParams::init(3, 8, 8, 2, 3, rng);
  auto f = random_tensor(rng, {4, 8});
  auto v = f.values_mut();
  for (std::size_t j = 0; j < 8; ++j) v[3 * 8 + j] = v[1 * 8 + j];
  auto s = encode(f, p, AttentionMode::SparseRelu);
  for (std::size_t m = 0; m <= 3; ++m)
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(s.keys[m].at(1, j) == s.keys[m].at(3, j));
      CHECK(s.values[m].at(1, j) == s.values[m].at(3, j));
    }
}

TEST_CASE("stack depth, retained queries and shapes") {
  Rng rng(3);
  auto f = random_tensor(rng, {5, 8});
  auto empty = encode(f, EncoderParams{}, AttentionMode::SparseRelu);
  CHECK(empty.attended.size() == 1);
  CHECK(empty.keys[0].node() == f.node());

  auto p = EncoderParams::init(4, 8, 8, 2, 3, rng);
  auto s = encode(f, p, AttentionMode::SparseRelu);
  CHECK(s.attended.size() == 5);
  CHECK(s.sparsity.size() == 4);
  for (std::size_t m = 0; m <= 4; ++m) {
    CHECK(s.keys[m].shape() == Shape{5, 8});
    CHECK(s.values[m].shape() == Shape{5, 8});
    CHECK(s.attended[m].shape() == Shape{1, 8});
  }
}

TEST_CASE("large configuration shapes") {
  NoGradGuard no_grad;
  Rng rng(4);
  auto p = EncoderParams::init(6, 768, 768, 8, 3, rng);
  auto f = random_tensor(rng, {196, 768}, 1.0, false);
  auto s = encode(f, p, AttentionMode::SparseRelu);
  CHECK(s.keys[6].shape() == Shape{196, 768});
  CHECK(s.attended.size() == 7);
}

TEST_CASE("seed 21 stack matches the scalar re-implementation") {
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    const bool sparse = mode == AttentionMode::SparseRelu;
    Rng rng(21);
    auto p = EncoderParams::init(2, 8, 8, 2, 3, rng);
    auto f = random_tensor(rng, {3, 8});
    auto s = encode(f, p, mode);

    Lifter<double> lift;
    ScalarEncoderState<double> ref;
    ref.keys = lift(f);
    ref.values = ref.keys;
    ref.query = scalar_row_mean(ref.keys, 3, 8);
    for (std::size_t m = 0; m < 2; ++m) {
      ref = scalar_encoder_layer(ref, 3, 8, lift_encoder_layer(p.layers[m], lift), sparse);
      CHECK(max_abs_diff(s.keys[m + 1].values(), ref.keys) < 1e-10);
      CHECK(max_abs_diff(s.values[m + 1].values(), ref.values) < 1e-10);
      CHECK(max_abs_diff(s.attended[m + 1].values(), ref.query) < 1e-10);
    }

    // Exact gradients of a probe on the final query and keys.
    std::vector<Tensor> tensors{f};
    for (const auto& layer : p.layers) collect_encoder_layer(layer, tensors);
    std::mt19937_64 prng(5);
    std::normal_distribution<double> dist;
    std::vector<double> pq(8), pk(24);
    for (double& x : pq) x = dist(prng);
    for (double& x : pk) x = dist(prng);
    for (auto& t : tensors) t.zero_grad();
    add(sum(mul(s.attended[2], Tensor::row(pq))), sum(mul(s.keys[2], Tensor::matrix(3, 8, pk)))).backward();
    auto exact = dual_gradients(tensors, [&](Lifter<Dual>& dl) {
      ScalarEncoderState<Dual> st;
      st.keys = dl(f);
      st.values = st.keys;
      st.query = scalar_row_mean(st.keys, 3, 8);
      for (std::size_t m = 0; m < 2; ++m) st = scalar_encoder_layer(st, 3, 8, lift_encoder_layer(p.layers[m], dl), sparse);
      Dual acc(0.0);
      for (std::size_t j = 0; j < 8; ++j) acc += st.query[j] * Dual(pq[j]);
      for (std::size_t j = 0; j < 24; ++j) acc += st.keys[j] * Dual(pk[j]);
      return acc;
    });
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (!tensors[t].defined()) continue;
      CAPTURE(t);
      std::vector<double> analytic(tensors[t].numel(), 0.0);
      if (tensors[t].has_grad()) analytic.assign(tensors[t].grad().begin(), tensors[t].grad().end());
      for (std::size_t i = 0; i < exact[t].size(); ++i) {
        CHECK(std::abs(analytic[i] - exact[t][i]) <= 1e-10 * std::max(1.0, std::abs(exact[t][i])));
      }
    }
  }
}

TEST_CASE("finite-difference check through the stack to the features") {
  Rng rng(6);
  auto p = EncoderParams::init(2, 6, 6, 2, 3, rng);
  auto f = random_tensor(rng, {4, 6});
  auto probe = random_tensor(rng, {1, 6}, 1.0, false);
  auto loss = [&] { return sum(mul(encode(f, p, AttentionMode::SparseRelu).attended.back(), probe)); };
  std::vector<std::pair<std::string, Tensor>> wrt{{"features", f}};
  ParameterSet set;
  p.register_params(set, "enc");
  for (const auto& [name, t] : set.entries()) wrt.emplace_back(name, t);
  auto result = check_gradients(loss, wrt);
  CAPTURE(result.worst);
  CHECK(result.max_rel_error < 1e-4);
}
