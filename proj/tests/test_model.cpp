// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "msat/errors.hpp"
#include "msat/model.hpp"
#include "msat/trainer.hpp"
#include "oracles/gradcheck.hpp"

using namespace msat;
using msat::testing::check_gradients;

namespace {

RunConfig tiny_config(AttentionMode mode) {
  RunConfig c = RunConfig::desk_preset();
  c.width = 8;
  c.channel_dim = 8;
  c.heads = 2;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.memory_slots = 2;
  c.concepts = 4;
  c.attention = mode;
  return c;
}

Sample tiny_sample(Rng& rng) {
  Sample s;
  s.id = "x";
  s.features = normal_param(rng, {3, 8}, 1.0).detach();
  s.input = {Vocab::kBos, 5, 7, 4};
  s.target = {5, 7, 4, Vocab::kEos};
  s.concepts = {1, 0, 0, 1};
  return s;
}

struct TinyData {
  Vocab vocab;
  std::vector<Sample> samples;
};

TinyData tiny_data(std::size_t n) {
  SyntheticSpec spec;
  spec.samples = n;
  spec.concepts = 8;
  spec.regions = 4;
  spec.dim = 8;
  spec.activation = 0.3;
  spec.seed = 3;
  SyntheticDataset ds = generate_synthetic(spec);
  std::vector<std::vector<std::string>> tokens;
  for (const auto& r : ds.reports) tokens.push_back(tokenize(r.report));
  TinyData out{Vocab::build(tokens, 1), {}};
  out.samples = make_samples(ds.features, ds.reports, out.vocab, ds.concepts);
  return out;
}

RunConfig train_config() {
  RunConfig c = tiny_config(AttentionMode::SparseRelu);
  c.concepts = 8;
  c.batch_size = 4;
  c.lr = 5e-3;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("msat_test_model_" + name);
}

}  // namespace

TEST_CASE("composed model gradients match central differences") {
  for (AttentionMode mode : {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline}) {
    CAPTURE(std::string(to_string(mode)));
    Rng rng(31);
    Model model(tiny_config(mode), 10, rng);
    Sample s = tiny_sample(rng);
    std::vector<std::pair<std::string, Tensor>> wrt(model.params().entries().begin(), model.params().entries().end());
    auto r = check_gradients([&] { return model.losses(s).total; }, wrt, 1e-4, 6, 7);
    INFO(r.worst);
    CHECK(r.checked > 300);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("zero concept weight leaves the concept head without gradient") {
  RunConfig c = tiny_config(AttentionMode::SparseRelu);
  c.lambda_mlc = 0.0;
  Rng rng(5);
  Model model(c, 10, rng);
  Sample s = tiny_sample(rng);
  for (Tensor t : model.params().tensors()) t.zero_grad();
  Model::Losses l = model.losses(s);
  CHECK(l.mlc.item() > 0.0);
  CHECK(l.total.item() == l.ce.item());
  l.total.backward();
  const Tensor& head = model.concept_head().head;
  REQUIRE(head.has_grad());
  for (double g : head.grad()) CHECK(g == 0.0);
  for (double g : model.concept_head().head_bias.grad()) CHECK(g == 0.0);
}

TEST_CASE("full preset weighs the losses one to five") {
  RunConfig c = RunConfig::full_preset();
  CHECK(c.lambda_ce == 1.0);
  CHECK(c.lambda_mlc == 5.0);
  CHECK(c.encoder_layers == 6);
  CHECK(c.decoder_layers == 6);
  CHECK(c.heads == 8);
  CHECK(c.memory_slots == 3);
  CHECK(c.lr == 5e-5);
  CHECK(c.batch_size == 32);
  CHECK(c.epochs == 60);
  CHECK(c.beam == 3);
}

TEST_CASE("make_samples joins on id and reports strays") {
  TinyData d = tiny_data(6);
  REQUIRE(d.samples.size() == 6);
  for (const auto& s : d.samples) {
    CHECK(s.input.front() == Vocab::kBos);
    CHECK(s.target.back() == Vocab::kEos);
    CHECK(s.input.size() == s.target.size());
  }
  std::vector<FeatureRecord> f{{"a", Tensor::filled({1, 8}, 0.0)}};
  std::vector<ReportRecord> r{{"b", "x"}};
  ConceptVocab cv({"x"});
  CHECK_THROWS_AS(make_samples(f, r, d.vocab, cv), FormatError);
}

TEST_CASE("training epochs are deterministic") {
  TinyData d = tiny_data(12);
  auto run = [&] {
    Rng rng(2);
    Model model(train_config(), d.vocab.size(), rng);
    Trainer trainer(model, train_config());
    return trainer.train_epoch(d.samples);
  };
  EpochStats a = run();
  EpochStats b = run();
  CHECK(a.total == b.total);
  CHECK(a.step_losses == b.step_losses);
  CHECK(a.step_losses.size() == 3);
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted run") {
  TinyData d = tiny_data(12);
  const RunConfig cfg = train_config();
  const auto path = temp_path("resume.ckpt");

  Rng rng_a(4);
  Model straight(cfg, d.vocab.size(), rng_a);
  Trainer ta(straight, cfg);
  ta.train_epoch(d.samples);
  ta.train_epoch(d.samples);
  ta.save(path);
  EpochStats third = ta.train_epoch(d.samples);

  Rng rng_b(99);
  Model resumed(cfg, d.vocab.size(), rng_b);
  Trainer tb(resumed, cfg);
  tb.restore(path);
  CHECK(tb.epoch() == 2);
  EpochStats again = tb.train_epoch(d.samples);
  REQUIRE(again.step_losses.size() == third.step_losses.size());
  for (std::size_t i = 0; i < third.step_losses.size(); ++i) {
    CHECK(std::abs(again.step_losses[i] - third.step_losses[i]) < 1e-10);
  }
  std::filesystem::remove(path);
}

TEST_CASE("restoring into a different shape names the parameter") {
  TinyData d = tiny_data(4);
  const auto path = temp_path("shape.ckpt");
  Rng rng(1);
  RunConfig cfg = train_config();
  Model model(cfg, d.vocab.size(), rng);
  Trainer(model, cfg).save(path);
  cfg.width = 4;
  cfg.channel_dim = 4;
  Model other(cfg, d.vocab.size(), rng);
  Trainer t(other, cfg);
  try {
    t.restore(path);
    FAIL("expected a checkpoint error");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("encoder") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("training lowers the loss") {
  TinyData d = tiny_data(24);
  RunConfig cfg = train_config();
  Rng rng(6);
  Model model(cfg, d.vocab.size(), rng);
  Trainer trainer(model, cfg);
  const double first = trainer.train_epoch(d.samples).total;
  double last = first;
  for (int e = 0; e < 29; ++e) last = trainer.train_epoch(d.samples).total;
  CHECK(last < 0.5 * first);
}

TEST_CASE("loss log appends one line per epoch") {
  const auto path = temp_path("loss.csv");
  std::filesystem::remove(path);
  append_loss_log(path, EpochStats{1, 2.0, 0.5, 4.5, {}});
  append_loss_log(path, EpochStats{2, 1.0, 0.25, 2.25, {}});
  std::ifstream is(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch,ce,mlc,total");
  CHECK(lines[2] == "2,1,0.25,2.25");
  std::filesystem::remove(path);
}

TEST_CASE("config files, overrides and seed environment") {
  const auto path = temp_path("run.cfg");
  {
    std::ofstream os(path);
    os << "# desk run\nwidth = 16\nchannel_dim=16\n\nattention = softmax_baseline\nuse_concepts = false\n";
  }
  RunConfig c = RunConfig::desk_preset();
  apply_config_file(c, path);
  CHECK(c.width == 16);
  CHECK(c.channel_dim == 16);
  CHECK(c.attention == AttentionMode::SoftmaxBaseline);
  CHECK_FALSE(c.use_concepts);

  RunConfig round = RunConfig::desk_preset();
  {
    std::ofstream os(path);
    os << c.dump();
  }
  apply_config_file(round, path);
  CHECK(round.dump() == c.dump());

  {
    std::ofstream os(path);
    os << "width = 16\nbogus line\n";
  }
  try {
    apply_config_file(c, path);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(c.set("no_such_key", "1"), ContractError);
  CHECK_THROWS_AS(c.set("width", "abc"), ContractError);

  ::setenv("MSA_SEED", "1234", 1);
  apply_seed_env(c);
  CHECK(c.seed == 1234);
  ::unsetenv("MSA_SEED");
  std::filesystem::remove(path);
}

TEST_CASE("generation is deterministic and bounded") {
  RunConfig c = tiny_config(AttentionMode::SparseRelu);
  c.max_len = 6;
  Rng rng(8);
  Model model(c, 10, rng);
  Sample s = tiny_sample(rng);
  Hypothesis a = model.generate(s.features);
  Hypothesis b = model.generate(s.features);
  CHECK(a.tokens == b.tokens);
  CHECK(a.logprob == b.logprob);
  CHECK(a.tokens.size() <= 6);
  CHECK(model.concept_probabilities(s.features).size() == 4);
}
