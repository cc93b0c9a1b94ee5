// SPDX-License-Identifier: Apache-2.0
#include "msat/bench.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "msat/adam.hpp"
#include "msat/errors.hpp"
#include "msat/ops.hpp"

namespace msat {

namespace {

struct Batch {
  std::vector<Tensor> queries, rows, targets;
};

// Identical data for both modes: the generator depends on the seed only.
Batch make_batch(const BenchOptions& o) {
  Rng rng(o.seed * 7919 + 17);
  Batch b;
  for (std::size_t i = 0; i < o.batch; ++i) {
    b.queries.push_back(normal_param(rng, {1, o.width}, 1.0).detach());
    b.rows.push_back(normal_param(rng, {o.regions, o.width}, 1.0).detach());
    b.targets.push_back(normal_param(rng, {1, o.width}, 1.0).detach());
  }
  return b;
}

struct Samples {
  std::vector<double> step_seconds;
  double sparsity = 0.0;
  double final_loss = 0.0;
  bool finite = true;
};

Samples run_once(const BenchOptions& o, AttentionMode mode, const Batch& batch) {
  Rng rng(o.seed);
  MsaParams params = MsaParams::init(MsaDims::uniform(o.width, o.channel_dim, o.heads, o.memory_slots), rng);
  ParameterSet set;
  params.register_params(set, "msa");
  Adam adam(set.tensors(), AdamOptions{.lr = o.lr});
  const double weight = 1.0 / static_cast<double>(o.batch);

  Samples s;
  std::size_t sparsity_count = 0;
  for (std::size_t step = 0; step < o.warmup + o.steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    adam.zero_grad();
    double loss_sum = 0.0;
    double sparsity_sum = 0.0;
    for (std::size_t i = 0; i < o.batch; ++i) {
      MsaOutput out = msa_forward(batch.queries[i], batch.rows[i], batch.rows[i], params, mode);
      const Tensor diff = sub(out.attended, batch.targets[i]);
      const Tensor loss = scale(mean(mul(diff, diff)), weight);
      loss.backward();
      loss_sum += loss.item();
      sparsity_sum += out.sparsity_fraction;
    }
    adam.step();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(loss_sum)) s.finite = false;
    if (step >= o.warmup) {
      s.step_seconds.push_back(elapsed);
      s.sparsity += sparsity_sum * weight;
      ++sparsity_count;
    }
    s.final_loss = loss_sum;
  }
  s.sparsity /= static_cast<double>(sparsity_count);
  return s;
}

std::pair<double, double> mean_stddev(const std::vector<double>& v) {
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  return {mu, v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0};
}

}  // namespace

BenchReport run_bench(const BenchOptions& o) {
  if (o.steps == 0 || o.runs == 0 || o.batch == 0 || o.regions == 0) {
    throw ContractError("bench: steps, runs, batch and regions must be positive");
  }
  const Batch batch = make_batch(o);
  const AttentionMode modes[2] = {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline};
  std::array<std::vector<double>, 2> pooled;
  std::array<double, 2> sparsity{};
  BenchReport report;
  for (std::size_t r = 0; r < o.runs; ++r) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t m = r % 2 == 0 ? k : 1 - k;
      Samples s = run_once(o, modes[m], batch);
      const auto [mu, sd] = mean_stddev(s.step_seconds);
      report.runs.push_back({modes[m], r, mu, sd, s.sparsity, s.final_loss, s.finite});
      pooled[m].insert(pooled[m].end(), s.step_seconds.begin(), s.step_seconds.end());
      sparsity[m] += s.sparsity / static_cast<double>(o.runs);
      report.summary[m].all_finite = report.summary[m].all_finite && s.finite;
    }
  }
  for (std::size_t m = 0; m < 2; ++m) {
    const auto [mu, sd] = mean_stddev(pooled[m]);
    report.summary[m].mean_step_seconds = mu;
    report.summary[m].stddev_step_seconds = sd;
    report.summary[m].mean_sparsity = sparsity[m];
  }
  return report;
}

void write_bench_csv(std::ostream& os, const BenchReport& report) {
  os << "mode,run,mean_step_s,stddev_step_s,sparsity,final_loss,finite\n";
  for (const BenchRun& r : report.runs) {
    os << to_string(r.mode) << ',' << r.run << ',' << r.mean_step_seconds << ',' << r.stddev_step_seconds << ','
       << r.mean_sparsity << ',' << r.final_loss << ',' << (r.all_finite ? 1 : 0) << '\n';
  }
  const AttentionMode modes[2] = {AttentionMode::SparseRelu, AttentionMode::SoftmaxBaseline};
  for (std::size_t m = 0; m < 2; ++m) {
    const BenchSummary& s = report.summary[m];
    os << to_string(modes[m]) << ",all," << s.mean_step_seconds << ',' << s.stddev_step_seconds << ','
       << s.mean_sparsity << ",," << (s.all_finite ? 1 : 0) << '\n';
  }
}

}  // namespace msat
