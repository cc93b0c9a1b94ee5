// SPDX-License-Identifier: Apache-2.0
//
// msat: train, generate, eval, bench, build-vocab, synth.
// Exit codes: 0 success, 1 usage or configuration error, 2 data, format or
// checkpoint error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msat/bench.hpp"
#include "msat/checkpoint.hpp"
#include "msat/config.hpp"
#include "msat/data.hpp"
#include "msat/errors.hpp"
#include "msat/metrics.hpp"
#include "msat/model.hpp"
#include "msat/trainer.hpp"
#include "msat/vocab.hpp"

namespace fs = std::filesystem;
using namespace msat;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

// Layering: preset, then config file, then MSA_SEED, then --set and the
// dedicated path flags.
struct ConfigArgs {
  std::string preset = "desk";
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> paths;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Base preset: desk or full")->capture_default_str();
    cmd->add_option("--config", file, "key = value config file applied on the preset");
    cmd->add_option("--set", sets, "Override one field, key=value (repeatable)");
  }

  void add_path(CLI::App* cmd, const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    for (char& c : flag) c = c == '_' ? '-' : c;
    cmd->add_option_function<std::string>(flag, [this, key](const std::string& v) { paths[key] = v; }, help);
  }

  RunConfig resolve(const std::optional<fs::path>& fallback_file = std::nullopt) const {
    RunConfig c = RunConfig::preset(preset);
    if (!file.empty()) {
      apply_config_file(c, file);
    } else if (fallback_file && fs::exists(*fallback_file)) {
      apply_config_file(c, *fallback_file);
    }
    apply_seed_env(c);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ContractError("--set expects key=value, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : paths) c.set(k, v);
    return c;
  }
};

void require_file(const std::string& value, const std::string& key) {
  if (value.empty()) throw ContractError("missing required path '" + key + "'");
  if (!fs::exists(value)) throw FormatError(key + " file " + value + " does not exist");
}

fs::path config_sidecar(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".cfg"); }

std::vector<std::vector<std::string>> tokenized(std::span<const ReportRecord> reports) {
  std::vector<std::vector<std::string>> out;
  out.reserve(reports.size());
  for (const auto& r : reports) out.push_back(tokenize(r.report));
  return out;
}

int cmd_train(const ConfigArgs& args, bool resume) {
  RunConfig c = args.resolve();
  require_file(c.features, "features");
  require_file(c.reports, "reports");
  require_file(c.vocab, "vocab");
  if (c.use_concepts) require_file(c.concept_vocab, "concept_vocab");
  if (c.checkpoint.empty()) throw ContractError("missing required path 'checkpoint'");
  if (resume) require_file(c.checkpoint, "checkpoint");

  const auto features = load_features(c.features);
  const auto reports = load_reports(c.reports);
  const Vocab vocab = Vocab::load(c.vocab);
  const ConceptVocab concepts = c.use_concepts ? ConceptVocab::load(c.concept_vocab) : ConceptVocab();
  if (c.use_concepts) c.concepts = concepts.size();
  c.validate();
  const auto samples = make_samples(features, reports, vocab, concepts);
  if (samples.empty()) throw FormatError("no training samples in " + c.features);
  if (samples.front().features.cols() != c.width) {
    throw FormatError("features have width " + std::to_string(samples.front().features.cols()) +
                      " but the model width is " + std::to_string(c.width));
  }

  Rng rng(c.seed);
  Model model(c, vocab.size(), rng);
  Trainer trainer(model, c);
  if (resume) trainer.restore(c.checkpoint);
  {
    std::ofstream os(config_sidecar(c.checkpoint));
    os << c.dump();
  }
  const fs::path log = c.log.empty() ? fs::path(c.checkpoint).replace_extension(".csv") : fs::path(c.log);
  while (trainer.epoch() < c.epochs) {
    const EpochStats s = trainer.train_epoch(samples);
    trainer.save(c.checkpoint);
    append_loss_log(log, s);
    std::printf("epoch %zu ce %.6f mlc %.6f total %.6f\n", s.epoch, s.ce, s.mlc, s.total);
    std::fflush(stdout);
  }
  return 0;
}

int cmd_generate(const ConfigArgs& args, const std::string& output) {
  RunConfig probe = args.resolve();
  require_file(probe.checkpoint, "checkpoint");
  RunConfig c = args.resolve(config_sidecar(probe.checkpoint));
  require_file(c.features, "features");
  require_file(c.vocab, "vocab");
  const auto features = load_features(c.features);
  const Vocab vocab = Vocab::load(c.vocab);
  c.validate();
  Rng rng(c.seed);
  Model model(c, vocab.size(), rng);
  assign_parameters(model.params(), load_checkpoint(c.checkpoint));

  std::vector<GeneratedRecord> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    const Hypothesis h = model.generate(f.features);
    out.push_back({f.id, vocab.decode(h.tokens), h.logprob});
  }
  save_generated(output, out);
  return 0;
}

std::string format_metrics(const MetricReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "{\"BLEU-1\": " << r.bleu[0] << ", \"BLEU-2\": " << r.bleu[1] << ", \"BLEU-3\": " << r.bleu[2]
     << ", \"BLEU-4\": " << r.bleu[3] << ", \"ROUGE-L\": " << r.rouge_l << ", \"CIDEr\": " << r.cider << "}";
  return os.str();
}

int cmd_eval(const std::string& generated, const std::string& references, bool allow_missing) {
  require_file(generated, "generated");
  require_file(references, "references");
  const auto gen = load_generated(generated);
  const auto refs = load_reports(references);
  std::map<std::string, const ReportRecord*> by_id;
  for (const auto& r : refs) by_id[r.id] = &r;
  std::vector<EvalPair> pairs;
  std::vector<std::string> missing;
  std::map<std::string, bool> matched;
  for (const auto& g : gen) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) {
      missing.push_back(g.id);
      continue;
    }
    matched[g.id] = true;
    pairs.push_back({g.id, tokenize(g.generated), {tokenize(it->second->report)}});
  }
  for (const auto& r : refs)
    if (!matched.count(r.id)) missing.push_back(r.id);
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += " " + id;
    if (!allow_missing) throw FormatError("ids without a counterpart:" + list);
    std::cerr << "warning: skipping ids without a counterpart:" << list << '\n';
  }
  if (pairs.empty()) throw FormatError("no matching ids between " + generated + " and " + references);
  std::cout << format_metrics(evaluate(pairs)) << '\n';
  return 0;
}

int cmd_bench(const BenchOptions& options, const std::string& csv) {
  const BenchReport report = run_bench(options);
  if (csv.empty()) {
    write_bench_csv(std::cout, report);
  } else {
    std::ofstream os(csv);
    if (!os) throw FormatError("cannot write " + csv);
    write_bench_csv(os, report);
  }
  const double ratio = report.sparse().mean_step_seconds / report.softmax().mean_step_seconds;
  std::fprintf(stderr, "sparse %.6f s/step, softmax %.6f s/step, ratio %.4f, sparsity %.4f\n",
               report.sparse().mean_step_seconds, report.softmax().mean_step_seconds, ratio,
               report.sparse().mean_sparsity);
  return 0;
}

int cmd_build_vocab(const std::string& reports_path, std::size_t min_freq, const std::string& output,
                    std::size_t concepts, const std::string& concept_output) {
  require_file(reports_path, "reports");
  const auto reports = load_reports(reports_path);
  const auto tokens = tokenized(reports);
  const Vocab vocab = Vocab::build(tokens, min_freq);
  vocab.save(output);
  if (!concept_output.empty()) {
    ConceptVocab::from_corpus(tokens, concepts, default_concept_stopwords()).save(concept_output);
  }
  std::printf("%zu tokens\n", vocab.size());
  return 0;
}

int cmd_synth(SyntheticSpec spec, std::size_t test, const fs::path& dir) {
  if (test == 0 || test >= spec.samples) throw ContractError("--test must be in [1, samples)");
  fs::create_directories(dir);
  const SyntheticDataset ds = generate_synthetic(spec);
  const std::size_t train = spec.samples - test;
  auto split = [&](std::size_t begin, std::size_t end, const std::string& name) {
    std::vector<FeatureRecord> f(ds.features.begin() + static_cast<std::ptrdiff_t>(begin),
                                 ds.features.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<ReportRecord> r(ds.reports.begin() + static_cast<std::ptrdiff_t>(begin),
                                ds.reports.begin() + static_cast<std::ptrdiff_t>(end));
    save_features(dir / (name + ".msaf"), f);
    save_reports(dir / (name + ".jsonl"), r);
  };
  split(0, train, "train");
  split(train, spec.samples, "test");
  ds.concepts.save(dir / "concepts.txt");
  std::printf("%zu train, %zu test, %zu concepts in %s\n", train, test, ds.concepts.size(), dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-augmented sparse attention report generator"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train on features and reports; checkpoints every epoch");
  train_args.add_to(train);
  for (const char* k : {"features", "reports", "vocab", "concept_vocab", "checkpoint", "log"}) {
    train_args.add_path(train, k, std::string("Path: ") + k);
  }
  train->add_flag("--resume", resume, "Continue from the checkpoint's epoch");

  ConfigArgs gen_args;
  std::string gen_output;
  auto* generate = app.add_subcommand("generate", "Beam-decode a report per feature record");
  gen_args.add_to(generate);
  for (const char* k : {"features", "vocab", "checkpoint"}) gen_args.add_path(generate, k, std::string("Path: ") + k);
  generate->add_option("--output,-o", gen_output, "JSON-lines output")->required();

  std::string eval_generated, eval_references;
  bool allow_missing = false;
  auto* eval = app.add_subcommand("eval", "Score generated reports against references");
  eval->add_option("--generated", eval_generated, "JSON-lines {id, generated, logprob}")->required();
  eval->add_option("--references", eval_references, "JSON-lines {id, report}")->required();
  eval->add_flag("--allow-missing", allow_missing, "Skip ids present on one side only");

  BenchOptions bench_options;
  std::string bench_csv;
  auto* bench = app.add_subcommand("bench", "Time sparse against softmax attention training steps");
  bench->add_option("--steps", bench_options.steps)->capture_default_str();
  bench->add_option("--warmup", bench_options.warmup)->capture_default_str();
  bench->add_option("--runs", bench_options.runs)->capture_default_str();
  bench->add_option("--batch", bench_options.batch)->capture_default_str();
  bench->add_option("--regions", bench_options.regions)->capture_default_str();
  bench->add_option("--width", bench_options.width)->capture_default_str();
  bench->add_option("--channel-dim", bench_options.channel_dim)->capture_default_str();
  bench->add_option("--heads", bench_options.heads)->capture_default_str();
  bench->add_option("--memory-slots", bench_options.memory_slots)->capture_default_str();
  bench->add_option("--seed", bench_options.seed)->capture_default_str();
  bench->add_option("--csv", bench_csv, "CSV output path (default stdout)");

  std::string vocab_reports, vocab_output, concept_output;
  std::size_t min_freq = RunConfig::desk_preset().min_freq;
  std::size_t concept_count = RunConfig::desk_preset().concepts;
  auto* build_vocab = app.add_subcommand("build-vocab", "Build token and concept vocabularies from reports");
  build_vocab->add_option("--reports", vocab_reports, "JSON-lines {id, report}")->required();
  build_vocab->add_option("--min-freq", min_freq)->capture_default_str();
  build_vocab->add_option("--output,-o", vocab_output, "Token vocabulary, one per line")->required();
  build_vocab->add_option("--concepts", concept_count, "Concept vocabulary size")->capture_default_str();
  build_vocab->add_option("--concept-output", concept_output, "Concept vocabulary path");

  SyntheticSpec spec;
  std::size_t test_count = 100;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a synthetic train/test split and its concept list");
  synth->add_option("--output-dir,-o", synth_dir)->required();
  synth->add_option("--samples", spec.samples)->capture_default_str();
  synth->add_option("--test", test_count, "Held-out samples at the end")->capture_default_str();
  synth->add_option("--concepts", spec.concepts)->capture_default_str();
  synth->add_option("--regions", spec.regions)->capture_default_str();
  synth->add_option("--dim", spec.dim)->capture_default_str();
  synth->add_option("--noise", spec.noise)->capture_default_str();
  synth->add_option("--activation", spec.activation)->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (train->parsed()) return cmd_train(train_args, resume);
    if (generate->parsed()) return cmd_generate(gen_args, gen_output);
    if (eval->parsed()) return cmd_eval(eval_generated, eval_references, allow_missing);
    if (bench->parsed()) return cmd_bench(bench_options, bench_csv);
    if (build_vocab->parsed()) return cmd_build_vocab(vocab_reports, min_freq, vocab_output, concept_count, concept_output);
    if (synth->parsed()) return cmd_synth(spec, test_count, synth_dir);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}
