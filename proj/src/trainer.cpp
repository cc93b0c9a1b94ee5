// SPDX-License-Identifier: Apache-2.0
#include "msat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <numeric>

#include "msat/checkpoint.hpp"
#include "msat/errors.hpp"
#include "msat/ops.hpp"

namespace msat {

namespace {

std::vector<std::string> param_names(const Model& model) {
  std::vector<std::string> names;
  for (const auto& [name, _] : model.params().entries()) names.push_back(name);
  return names;
}

}  // namespace

double epoch_lr(const RunConfig& config, std::size_t epoch) {
  if (!config.cosine_lr || config.epochs == 0) return config.lr;
  const double progress = static_cast<double>(std::min(epoch - 1, config.epochs)) / static_cast<double>(config.epochs);
  return 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * progress));
}

Trainer::Trainer(const Model& model, const RunConfig& config)
    : model_(&model),
      config_(config),
      names_(param_names(model)),
      adam_(model.params().tensors(), AdamOptions{.lr = config.lr, .weight_decay = config.weight_decay}) {}

EpochStats Trainer::train_epoch(std::span<const Sample> data) {
  if (data.empty()) throw ContractError("trainer: empty training set");
  EpochStats stats;
  stats.epoch = ++epoch_;
  adam_.options().lr = epoch_lr(config_, epoch_);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config_.seed + epoch_);
  std::shuffle(order.begin(), order.end(), rng);

  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    const double weight = 1.0 / static_cast<double>(end - start);
    adam_.zero_grad();
    double batch_total = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      Model::Losses l = model_->losses(data[order[i]]);
      stats.ce += l.ce.item();
      stats.mlc += l.mlc.item();
      stats.total += l.total.item();
      batch_total += l.total.item();
      scale(l.total, weight).backward();
    }
    stats.step_losses.push_back(batch_total * weight);
    if (config_.clip_norm > 0.0) clip_grad_norm(adam_.params(), config_.clip_norm);
    adam_.step();
  }
  const double n = static_cast<double>(data.size());
  stats.ce /= n;
  stats.mlc /= n;
  stats.total /= n;
  return stats;
}

void Trainer::save(const std::filesystem::path& path) const {
  NamedTensors out = model_->params().entries();
  const auto params = model_->params().tensors();
  const auto states = adam_.states();
  std::uint64_t step = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const AdamState& s = states[i];
    step = std::max(step, s.step);
    if (s.first_moment.empty()) continue;
    out.emplace_back("adam.m." + names_[i], Tensor(params[i].shape(), s.first_moment));
    out.emplace_back("adam.v." + names_[i], Tensor(params[i].shape(), s.second_moment));
  }
  out.emplace_back("trainer.adam_step", Tensor::scalar(static_cast<double>(step)));
  out.emplace_back("trainer.epoch", Tensor::scalar(static_cast<double>(epoch_)));
  save_checkpoint(path, out);
}

void Trainer::restore(const std::filesystem::path& path) {
  NamedTensors loaded = load_checkpoint(path);
  assign_parameters(model_->params(), loaded);
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : loaded) by_name[name] = &t;
  auto counter = [&](const char* name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(std::string("checkpoint lacks '") + name + "'");
    return static_cast<std::uint64_t>(it->second->item());
  };
  const std::uint64_t step = counter("trainer.adam_step");
  epoch_ = static_cast<std::size_t>(counter("trainer.epoch"));
  auto states = adam_.states();
  for (std::size_t i = 0; i < names_.size(); ++i) {
    auto m = by_name.find("adam.m." + names_[i]);
    auto v = by_name.find("adam.v." + names_[i]);
    if (m == by_name.end() || v == by_name.end()) {
      states[i] = AdamState{};
      continue;
    }
    states[i].first_moment.assign(m->second->values().begin(), m->second->values().end());
    states[i].second_moment.assign(v->second->values().begin(), v->second->values().end());
    states[i].step = step;
  }
}

void append_loss_log(const std::filesystem::path& path, const EpochStats& stats) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw FormatError("cannot append to log " + path.string());
  if (fresh) os << "epoch,ce,mlc,total\n";
  os.precision(17);
  os << stats.epoch << ',' << stats.ce << ',' << stats.mlc << ',' << stats.total << '\n';
}

}  // namespace msat
