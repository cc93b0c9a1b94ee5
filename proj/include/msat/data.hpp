// SPDX-License-Identifier: Apache-2.0
//
// Dataset files and the synthetic generator.
//
// Feature file (little-endian):
//   "MSAF" | u32 count | u32 N | u32 D | count × (u32 id length | id | N·D f64 row-major)
// Reports: JSON lines {"id": ..., "report": ...}.
// Generated output: JSON lines {"id": ..., "generated": ..., "logprob": ...}.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msat/mcgn.hpp"
#include "msat/tensor.hpp"

namespace msat {

struct FeatureRecord {
  std::string id;
  Tensor features;  // N×D, constant
};

/// All records must share N and D.
void save_features(const std::filesystem::path& path, std::span<const FeatureRecord> records);
/// All-or-nothing: any malformed byte range throws FormatError with its offset.
std::vector<FeatureRecord> load_features(const std::filesystem::path& path);

struct ReportRecord {
  std::string id;
  std::string report;
};

void save_reports(const std::filesystem::path& path, std::span<const ReportRecord> records);
std::vector<ReportRecord> load_reports(const std::filesystem::path& path);

struct GeneratedRecord {
  std::string id;
  std::string generated;
  double logprob = 0.0;
};

void save_generated(const std::filesystem::path& path, std::span<const GeneratedRecord> records);
std::vector<GeneratedRecord> load_generated(const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t samples = 600;
  std::size_t concepts = 32;  // C, at most synthetic_concept_words().size()
  std::size_t regions = 8;    // N
  std::size_t dim = 32;       // D
  double noise = 0.1;
  double activation = 0.1;  // independent per concept and sample
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  std::vector<FeatureRecord> features;
  std::vector<ReportRecord> reports;
  std::vector<std::vector<double>> targets;  // ground-truth active set per sample
  ConceptVocab concepts;
};

/// Radiology terms used as synthetic concept words, in canonical order.
const std::vector<std::string>& synthetic_concept_words();
/// Report for an empty active set.
inline constexpr const char* kNoFindingsReport = "no acute cardiopulmonary process";

/// Concept c owns the flattened feature entries [c·L, (c+1)·L), L = ⌊N·D / C⌋,
/// and adds a fixed pattern there when active. Reports list one sentence per
/// active concept in index order.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);
/// The per-concept patterns generate_synthetic uses, each N×D.
std::vector<Tensor> synthetic_patterns(const SyntheticSpec& spec);

}  // namespace msat
