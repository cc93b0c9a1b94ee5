// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "msat/errors.hpp"
#include "msat/mcgn.hpp"
#include "msat/ops.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/lift.hpp"

using namespace msat;
using namespace msat::testing;

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double naive_bce(double x, double y) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  return -(y * std::log(p) + (1.0 - y) * std::log(std::exp(-x) / (1.0 + std::exp(-x))));
}

}  // namespace

TEST_CASE("concept vocab ranks by frequency then lexicographically") {
  std::vector<std::vector<std::string>> corpus{words("effusion and edema"), words("edema of the lung"),
                                               words("atelectasis effusion"), words("cardiomegaly edema")};
  auto v = ConceptVocab::from_corpus(corpus, 4, default_concept_stopwords());
  REQUIRE(v.size() == 4);
  CHECK(v.concepts() == std::vector<std::string>{"edema", "effusion", "atelectasis", "cardiomegaly"});
  CHECK(v.find("lung") == -1);
  auto all = ConceptVocab::from_corpus(corpus, 100, default_concept_stopwords());
  CHECK(all.size() == 5);
  CHECK(all.concepts().back() == "lung");
  CHECK_THROWS_AS(ConceptVocab({"a", "b", "a"}), ContractError);
}

TEST_CASE("concept extraction on a hand-enumerated mini-corpus") {
  ConceptVocab v({"effusion", "edema", "pneumothorax", "cardiomegaly"});
  const std::vector<std::string> reports{"small left effusion", "no pneumothorax or effusion",
                                         "mild edema with cardiomegaly", "lungs are clear",
                                         "cardiomegaly edema effusion pneumothorax edema"};
  const std::vector<std::vector<double>> table{
      {1, 0, 0, 0}, {1, 0, 1, 0}, {0, 1, 0, 1}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  for (std::size_t i = 0; i < reports.size(); ++i) CHECK(extract_concepts(words(reports[i]), v) == table[i]);
  CHECK(extract_concepts({}, v) == std::vector<double>(4, 0.0));
  // Re-extracting from the concept terms alone reproduces the same target.
  for (const auto& r : reports) {
    auto y = extract_concepts(words(r), v);
    std::vector<std::string> present;
    for (std::size_t k = 0; k < v.size(); ++k)
      if (y[k] == 1.0) present.push_back(v.concepts()[k]);
    CHECK(extract_concepts(present, v) == y);
  }
}

TEST_CASE("concept loss hand values") {
  CHECK(mlc_loss(Tensor::row({0, 0, 0}), std::vector<double>{1, 0, 1}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const double hand = (2.0 * std::log(1.0 + std::exp(-1.0)) + std::log(2.0)) / 3.0;  // 0.439890
  CHECK(std::abs(mlc_loss(Tensor::row({1, -1, 0}), std::vector<double>{1, 0, 1}).item() - hand) < 1e-6);
  CHECK(std::abs(hand - 0.439890) < 1e-6);
  CHECK(mlc_loss(Tensor::row({20, 20}), std::vector<double>{1, 1}).item() < 1e-8);
  CHECK_THROWS_AS(mlc_loss(Tensor::row({0, 0}), std::vector<double>{1, 0.5}), ContractError);
}

TEST_CASE("stable loss equals the naive form on a probe grid") {
  for (double x = -30.0; x <= 30.0; x += 0.25)
    for (double y : {0.0, 1.0}) {
      const double stable = mlc_loss(Tensor::row({x}), std::vector<double>{y}).item();
      CHECK(stable >= 0.0);
      CHECK(std::abs(stable - naive_bce(x, y)) < 1e-10);
    }
}

TEST_CASE("concept loss gradient") {
  Rng rng(3);
  auto x = random_tensor(rng, {1, 6}, 3.0);
  std::vector<double> y{1, 0, 0, 1, 1, 0};
  auto r = check_gradients([&] { return mlc_loss(x, y); }, {{"logits", x}});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("zero head gives one-half probabilities") {
  Rng rng(4);
  auto enc = EncoderParams::init(2, 8, 8, 2, 3, rng);
  auto p = McgnParams::init(8, 8, 2, 3, 5, rng);
  p.head = Tensor(Shape{5, 8}, true);
  auto f = random_tensor(rng, {3, 8});
  auto out = mcgn_forward(encode(f, enc, AttentionMode::SparseRelu), 2, p, AttentionMode::SparseRelu);
  auto probs = sigmoid(out.logits);
  for (double l : out.logits.values()) CHECK(l == 0.0);
  for (double q : probs.values()) CHECK(q == 0.5);
}

TEST_CASE("tap layer must lie inside the stack") {
  Rng rng(5);
  auto enc = EncoderParams::init(2, 8, 8, 2, 3, rng);
  auto p = McgnParams::init(8, 8, 2, 3, 4, rng);
  auto s = encode(random_tensor(rng, {3, 8}), enc, AttentionMode::SparseRelu);
  CHECK_THROWS_AS(mcgn_forward(s, 0, p, AttentionMode::SparseRelu), ContractError);
  CHECK_THROWS_AS(mcgn_forward(s, 3, p, AttentionMode::SparseRelu), ContractError);
  CHECK_NOTHROW(mcgn_forward(s, 1, p, AttentionMode::SparseRelu));
}

TEST_CASE("concept feature is invariant to permuting input regions") {
  Rng rng(6);
  auto enc = EncoderParams::init(2, 8, 8, 2, 3, rng);
  auto p = McgnParams::init(8, 8, 2, 3, 4, rng);
  auto f = random_tensor(rng, {4, 8});
  std::vector<std::size_t> perm{2, 0, 3, 1};
  auto a = mcgn_forward(encode(f, enc, AttentionMode::SparseRelu), 2, p, AttentionMode::SparseRelu);
  auto b = mcgn_forward(encode(gather_rows(f, perm), enc, AttentionMode::SparseRelu), 2, p,
                        AttentionMode::SparseRelu);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(a.concept_feature.values()[j] - b.concept_feature.values()[j]) < 1e-12);
}

TEST_CASE("seed 17 logits match the scalar oracle") {
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    const bool sparse = mode == AttentionMode::SparseRelu;
    Rng rng(17);
    auto enc = EncoderParams::init(2, 8, 8, 2, 3, rng);
    auto p = McgnParams::init(8, 8, 2, 3, 8, rng);
    auto f = random_tensor(rng, {3, 8});
    auto out = mcgn_forward(encode(f, enc, mode), 2, p, mode);

    Lifter<double> lift;
    ScalarEncoderState<double> s;
    s.keys = lift(f);
    s.values = s.keys;
    s.query = scalar_row_mean(s.keys, 3, 8);
    s = scalar_encoder_layer(s, 3, 8, lift_encoder_layer(enc.layers[0], lift), sparse);
    auto vc = scalar_msa(s.query, s.keys, s.values, 3, lift_msa(p.msa, lift), sparse).attended;
    auto w = lift(p.head);
    auto b = lift(p.head_bias);
    auto logits = smatvec(w, vc, 8, &b);
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(out.logits.values()[k] - logits[k]) < 1e-10);
  }
}

TEST_CASE("concept vocabulary file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "msat_test_concepts.txt";
  ConceptVocab v({"effusion", "edema", "pneumothorax"});
  v.save(path);
  ConceptVocab back = ConceptVocab::load(path);
  CHECK(back.concepts() == v.concepts());
  {
    std::ofstream os(path);
    os << "edema\nedema\n";
  }
  CHECK_THROWS_AS(ConceptVocab::load(path), FormatError);
  std::filesystem::remove(path);
}
