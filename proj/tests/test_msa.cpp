// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msat/errors.hpp"
#include "msat/msa.hpp"
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

struct Case {
  MsaParams params;
  Tensor query, keys, values;
};

Case make_case(std::uint64_t seed, std::size_t n, const MsaDims& dims) {
  Rng rng(seed);
  Case c;
  c.params = MsaParams::init(dims, rng);
  c.query = random_tensor(rng, {1, dims.query_dim});
  c.keys = random_tensor(rng, {n, dims.key_dim});
  c.values = random_tensor(rng, {n, dims.value_dim});
  return c;
}

std::vector<Tensor> case_tensors(const Case& c) {
  std::vector<Tensor> out{c.query, c.keys, c.values};
  collect_msa(c.params, out);
  return out;
}

template <class T>
ScalarMsaOut<T> run_scalar(const Case& c, Lifter<T>& lift, bool sparse) {
  Vec<T> q = lift(c.query), k = lift(c.keys), v = lift(c.values);
  ScalarMsa<T> p = lift_msa(c.params, lift);
  return scalar_msa(q, k, v, c.keys.rows(), p, sparse);
}

std::vector<double> probe_for(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> p(n);
  for (double& x : p) x = dist(rng);
  return p;
}

void check_against_oracle(const Case& c, AttentionMode mode, double tol) {
  const bool sparse = mode == AttentionMode::SparseRelu;
  MsaOutput out = msa_forward(c.query, c.keys, c.values, c.params, mode);
  Lifter<double> lift;
  auto ref = run_scalar(c, lift, sparse);
  CHECK(max_abs_diff(out.attended.values(), ref.attended) < tol);
  CHECK(max_abs_diff(out.spatial_weights.values(), ref.beta) < tol);
}

}  // namespace

TEST_CASE("extend_with_memory stacks memory rows below the inputs") {
  auto c = make_case(1, 2, MsaDims::uniform(4, 4, 2, 3));
  auto [k, v] = extend_with_memory(c.keys, c.values, c.params);
  REQUIRE(k.shape() == Shape{5, 4});
  REQUIRE(v.shape() == Shape{5, 4});
  for (std::size_t i = 0; i < 8; ++i) CHECK(k.values()[i] == c.keys.values()[i]);
  for (std::size_t i = 0; i < 12; ++i) CHECK(k.values()[8 + i] == c.params.memory_keys.values()[i]);

  auto c0 = make_case(1, 2, MsaDims::uniform(4, 4, 2, 0));
  auto [k0, v0] = extend_with_memory(c0.keys, c0.values, c0.params);
  CHECK(k0.node() == c0.keys.node());

  auto wide = Tensor(Shape{2, 5});
  CHECK_THROWS_AS(extend_with_memory(wide, c.values, c.params), DimensionError);
}

TEST_CASE("memory keys receive a nonzero gradient") {
  auto c = make_case(2, 3, MsaDims::uniform(8, 8, 2, 3));
  auto out = msa_forward(c.query, c.keys, c.values, c.params, AttentionMode::SoftmaxBaseline);
  sum(mul(out.attended, Tensor::row(probe_for(8, 3)))).backward();
  REQUIRE(c.params.memory_keys.has_grad());
  double norm = 0.0;
  for (double g : c.params.memory_keys.grad()) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("bilinear pool examples") {
  auto rows = Tensor::matrix(3, 2, {1, 2, 0, 3, 4, 0.5});
  auto id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  auto zero_q = Tensor::row({0, 0});
  auto annihilated = bilinear_pool(zero_q, rows, id, id);
  for (double x : annihilated.values()) CHECK(x == 0.0);
  auto gated = bilinear_pool(Tensor::row({1, 1}), rows, id, id);
  CHECK(max_abs_diff(gated.values(), rows.values()) == 0.0);
}

TEST_CASE("bilinear pool matches a scalar loop, seed 5") {
  Rng rng(5);
  auto q = random_tensor(rng, {1, 4});
  auto x = random_tensor(rng, {4, 4});  // N=3 plus one memory row
  auto wx = random_tensor(rng, {4, 4});
  auto wq = random_tensor(rng, {4, 4});
  auto b = bilinear_pool(q, x, wx, wq);
  Vec<double> gate = smatvec(Vec<double>(wq.values().begin(), wq.values().end()),
                             Vec<double>(q.values().begin(), q.values().end()), 4);
  for (std::size_t i = 0; i < 4; ++i) {
    Vec<double> row = smatvec(Vec<double>(wx.values().begin(), wx.values().end()),
                              row_of(Vec<double>(x.values().begin(), x.values().end()), i, 4), 4);
    for (std::size_t o = 0; o < 4; ++o) CHECK(std::abs(b.at(i, o) - srelu(row[o]) * srelu(gate[o])) < 1e-12);
  }
}

TEST_CASE("spatial attention examples") {
  MsaDims dims = MsaDims::uniform(2, 2, 1, 0);
  Rng rng(0);
  auto p = MsaParams::init(dims, rng);
  p.key_reduce = Tensor::matrix(2, 2, {1, 0, 0, 1});

  p.spatial_scorer = Tensor::row({-1, -1});
  auto pooled = Tensor::matrix(3, 2, {1, 2, 0.5, 0, 3, 1});
  auto all_neg = spatial_attention(pooled, p, AttentionMode::SparseRelu);
  for (double w : all_neg.weights.values()) CHECK(w == 0.0);
  auto mixed = grouped_weighted_sum(all_neg.weights, pooled);
  for (double x : mixed.values()) CHECK(x == 0.0);

  p.spatial_scorer = Tensor::row({1, -1});
  auto one = spatial_attention(Tensor::matrix(3, 2, {2, 0.5, 0, 1, 1, 4}), p, AttentionMode::SparseRelu);
  CHECK(one.weights.values()[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(one.weights.values()[1] == 0.0);
  CHECK(one.weights.values()[2] == 0.0);
}

TEST_CASE("channel gate examples") {
  auto wc = Tensor::matrix(3, 2, {1, -2, 3, 0.5, -1, 4});
  auto zero_keys = channel_gate(Tensor(Shape{4, 2}), wc);
  for (double g : zero_keys.values()) CHECK(g == 0.5);
  auto dead = channel_gate(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor(Shape{3, 2}));
  for (double g : dead.values()) CHECK(g == 0.5);
}

TEST_CASE("channel gate matches a scalar loop, seed 9") {
  Rng rng(9);
  auto reduced = random_tensor(rng, {5, 6});
  auto wc = random_tensor(rng, {4, 6});
  auto gate = channel_gate(reduced, wc);
  Vec<double> mean = scalar_row_mean(Vec<double>(reduced.values().begin(), reduced.values().end()), 5, 6);
  Vec<double> z = smatvec(Vec<double>(wc.values().begin(), wc.values().end()), mean, 4);
  for (std::size_t o = 0; o < 4; ++o) {
    CHECK(std::abs(gate.values()[o] - ssigmoid(z[o])) < 1e-12);
    CHECK(gate.values()[o] > 0.0);
    CHECK(gate.values()[o] < 1.0);
  }
}

TEST_CASE("fully pruned block returns the gated norm bias") {
  auto c = make_case(4, 3, MsaDims::uniform(4, 4, 2, 0));
  c.params.spatial_scorer = Tensor::row({-1, -1, -1, -1});
  c.params.key_reduce = Tensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  c.params.norm_bias = Tensor::row({0.1, -0.2, 0.3, 0.4});
  auto out = msa_forward(c.query, c.keys, c.values, c.params, AttentionMode::SparseRelu);
  CHECK(out.sparsity_fraction == 1.0);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(out.attended.values()[j] == out.channel_gate.values()[j] * c.params.norm_bias.values()[j]);
  }
}

TEST_CASE("seed 13 block matches the scalar oracle in value and gradient") {
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    CAPTURE(to_string(mode));
    const bool sparse = mode == AttentionMode::SparseRelu;
    auto c = make_case(13, 4, MsaDims::uniform(8, 8, 2, 3));
    check_against_oracle(c, mode, 1e-10);

    const auto probe = probe_for(8, 99);
    Tensor probe_t = Tensor::row(probe);
    auto tensors = case_tensors(c);
    for (auto& t : tensors)
      if (t.defined()) t.zero_grad();
    sum(mul(msa_forward(c.query, c.keys, c.values, c.params, mode).attended, probe_t)).backward();

    auto exact = dual_gradients(tensors, [&](Lifter<Dual>& lift) {
      auto out = run_scalar(c, lift, sparse);
      Dual acc(0.0);
      for (std::size_t j = 0; j < 8; ++j) acc += out.attended[j] * Dual(probe[j]);
      return acc;
    });
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (!tensors[t].defined()) continue;
      CAPTURE(t);
      REQUIRE(tensors[t].has_grad());
      for (std::size_t i = 0; i < exact[t].size(); ++i) {
        CHECK(std::abs(tensors[t].grad()[i] - exact[t][i]) <= 1e-10 * std::max(1.0, std::abs(exact[t][i])));
      }
    }
  }
}

TEST_CASE("block matches the scalar oracle over small configurations") {
  std::uint64_t seed = 100;
  for (std::size_t n = 0; n <= 5; ++n)
    for (std::size_t d : {2, 4, 8})
      for (std::size_t h : {1, 2})
        for (std::size_t nm : {0, 3}) {
          if (n + nm == 0) continue;
          for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
            CAPTURE(n);
            CAPTURE(d);
            CAPTURE(h);
            CAPTURE(nm);
            check_against_oracle(make_case(seed++, n, MsaDims::uniform(d, d, h, nm)), mode, 1e-10);
          }
        }
}

TEST_CASE("block handles distinct query, key, value and channel widths") {
  MsaDims dims{3, 5, 2, 6, 4, 2, 3};
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    check_against_oracle(make_case(21, 4, dims), mode, 1e-10);
  }
  CHECK_THROWS_AS(MsaParams::init(MsaDims{3, 5, 2, 5, 4, 2, 3}, *std::make_unique<Rng>(1)), DimensionError);
}

TEST_CASE("spatial weights are nonnegative, softmax columns sum to one") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = make_case(seed, 5, MsaDims::uniform(8, 8, 2, 3));
    auto sparse = msa_forward(c.query, c.keys, c.values, c.params, AttentionMode::SparseRelu);
    for (double w : sparse.spatial_weights.values()) CHECK(w >= 0.0);
    for (double g : sparse.channel_gate.values()) CHECK((g > 0.0 && g < 1.0));

    auto soft = msa_forward(c.query, c.keys, c.values, c.params, AttentionMode::SoftmaxBaseline);
    const auto& w = soft.spatial_weights;
    for (std::size_t h = 0; h < 2; ++h) {
      double total = 0.0;
      for (std::size_t i = 0; i < w.rows(); ++i) {
        CHECK(w.at(i, h) > 0.0);
        total += w.at(i, h);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("sparsity census over 100 seeds") {
  double total = 0.0;
  std::size_t strictly_inside = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto c = make_case(1000 + seed, 4, MsaDims::uniform(8, 8, 2, 3));
    auto out = msa_forward(c.query, c.keys, c.values, c.params, AttentionMode::SparseRelu);
    CHECK(out.sparsity_fraction >= 0.0);
    CHECK(out.sparsity_fraction <= 1.0);
    total += out.sparsity_fraction;
    strictly_inside += out.sparsity_fraction > 0.0 && out.sparsity_fraction < 1.0;
  }
  const double mean = total / 100.0;
  MESSAGE("mean sparsity fraction over 100 seeds: " << mean << ", strictly inside (0,1): " << strictly_inside);
  CHECK(mean > 0.0);
  CHECK(mean < 1.0);
  CHECK(strictly_inside > 50);
}

TEST_CASE("zero memory slots are equivalent to no memory") {
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    auto with = make_case(31, 4, MsaDims::uniform(8, 8, 2, 3));
    auto without = make_case(31, 4, MsaDims::uniform(8, 8, 2, 0));
    // Share every non-memory parameter.
    without.params.key_proj = with.params.key_proj;
    without.params.value_proj = with.params.value_proj;
    without.params.query_key_proj = with.params.query_key_proj;
    without.params.query_value_proj = with.params.query_value_proj;
    without.params.key_reduce = with.params.key_reduce;
    without.params.spatial_scorer = with.params.spatial_scorer;
    without.params.channel_proj = with.params.channel_proj;
    without.query = with.query;
    without.keys = with.keys;
    without.values = with.values;

    auto base = msa_forward(without.query, without.keys, without.values, without.params, mode).attended;
    auto random_mem = msa_forward(with.query, with.keys, with.values, with.params, mode).attended;
    CHECK(max_abs_diff(base.values(), random_mem.values()) > 1e-6);

    with.params.memory_keys = Tensor(Shape{3, 8}, true);
    with.params.memory_values = Tensor(Shape{3, 8}, true);
    auto zero_mem = msa_forward(with.query, with.keys, with.values, with.params, mode).attended;
    if (mode == AttentionMode::SparseRelu) {
      CHECK(max_abs_diff(base.values(), zero_mem.values()) < 1e-12);
    } else {
      // Zero rows score exactly 0 yet still take softmax mass, so only sparse mode is memory-transparent.
      CHECK(max_abs_diff(base.values(), zero_mem.values()) > 0.0);
    }
  }
}

TEST_CASE("permuting input rows leaves the output unchanged") {
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    auto c = make_case(41, 5, MsaDims::uniform(8, 8, 2, 3));
    auto out = msa_forward(c.query, c.keys, c.values, c.params, mode).attended;
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    auto k = gather_rows(c.keys, perm);
    auto v = gather_rows(c.values, perm);
    auto permuted = msa_forward(c.query, k, v, c.params, mode).attended;
    CHECK(max_abs_diff(out.values(), permuted.values()) < 1e-12);
  }
}

TEST_CASE("finite-difference check of the whole block, seed 11") {
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    auto c = make_case(11, 4, MsaDims::uniform(6, 6, 2, 3));
    Tensor probe = Tensor::row(probe_for(6, 12));
    auto loss = [&] { return sum(mul(msa_forward(c.query, c.keys, c.values, c.params, mode).attended, probe)); };
    std::vector<std::pair<std::string, Tensor>> wrt{{"query", c.query}, {"keys", c.keys}, {"values", c.values}};
    ParameterSet set;
    c.params.register_params(set, "msa");
    for (const auto& [name, t] : set.entries()) wrt.emplace_back(name, t);
    auto result = check_gradients(loss, wrt);
    CAPTURE(result.worst);
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("empty key set is a contract error") {
  auto c = make_case(3, 0, MsaDims::uniform(4, 4, 1, 0));
  CHECK_THROWS_AS(msa_forward(c.query, c.keys, c.values, c.params, AttentionMode::SparseRelu), ContractError);
  CHECK_THROWS_AS(msa_forward(Tensor(Shape{1, 3}), c.keys, c.values, c.params, AttentionMode::SparseRelu),
                  ContractError);
  auto ok = make_case(3, 2, MsaDims::uniform(4, 4, 1, 0));
  CHECK_THROWS_AS(msa_forward(Tensor(Shape{1, 3}), ok.keys, ok.values, ok.params, AttentionMode::SparseRelu),
                  DimensionError);
}

TEST_CASE("attention mode names round-trip") {
  CHECK(parse_attention_mode(to_string(AttentionMode::SparseRelu)) == AttentionMode::SparseRelu);
  CHECK(parse_attention_mode("softmax") == AttentionMode::SoftmaxBaseline);
  CHECK_THROWS_AS(parse_attention_mode("dense"), ContractError);
}
