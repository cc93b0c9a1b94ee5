// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. Files are `key = value` lines with `#` comments; keys are
// the field names below.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msat/msa.hpp"

namespace msat {

struct RunConfig {
  // Model.
  std::size_t width = 32;  // D = D_B
  std::size_t channel_dim = 32;
  std::size_t heads = 2;
  std::size_t encoder_layers = 2;  // M
  std::size_t decoder_layers = 2;  // N
  std::size_t memory_slots = 3;
  std::size_t concepts = 32;  // K
  std::size_t tap_layer = 0;  // 0 selects M
  AttentionMode attention = AttentionMode::SparseRelu;
  bool use_concepts = true;

  // Training.
  double lr = 8e-3;
  std::size_t batch_size = 4;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  double lambda_ce = 1.0;
  double lambda_mlc = 5.0;
  double clip_norm = 5.0;
  double weight_decay = 0.1;
  bool cosine_lr = true;  // anneal lr to zero over `epochs`, constant within an epoch
  std::size_t min_freq = 5;

  // Decoding.
  std::size_t beam = 3;
  std::size_t max_len = 100;

  // Paths.
  std::string features;
  std::string reports;
  std::string vocab;
  std::string concept_vocab;
  std::string checkpoint;
  std::string log;

  static RunConfig full_preset();
  static RunConfig desk_preset();
  static RunConfig preset(const std::string& name);

  /// Sets one field from its textual form; unknown keys and bad values are contract errors.
  void set(const std::string& key, const std::string& value);
  /// Dimension and range checks.
  void validate() const;
  std::size_t effective_tap() const { return tap_layer == 0 ? encoder_layers : tap_layer; }
  /// Every field as `key = value` lines, loadable by apply_config_file.
  std::string dump() const;
};

/// Applies every assignment in `path` on top of `config`.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
/// Applies MSA_SEED when set.
void apply_seed_env(RunConfig& config);

}  // namespace msat
