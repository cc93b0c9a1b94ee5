// SPDX-License-Identifier: Apache-2.0
#include "msat/data.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "msat/binary_io.hpp"
#include "msat/errors.hpp"

namespace msat {

namespace {

constexpr char kFeatureMagic[] = "MSAF";

using Json = nlohmann::json;

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!out.back().is_object()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not an object");
  }
  return out;
}

template <class T>
T field(const Json& j, const char* key, const std::filesystem::path& path, std::size_t record) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw FormatError(path.string() + ": record " + std::to_string(record + 1) + " lacks a valid \"" + key + "\"");
  }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

void save_features(const std::filesystem::path& path, std::span<const FeatureRecord> records) {
  std::size_t n = 0, d = 0;
  if (!records.empty()) {
    n = records[0].features.rows();
    d = records[0].features.cols();
  }
  ByteWriter w;
  w.raw(std::string_view(kFeatureMagic, 4));
  w.u32(static_cast<std::uint32_t>(records.size()));
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(d));
  for (const auto& r : records) {
    if (r.features.shape() != Shape{n, d}) {
      throw DimensionError("features: record '" + r.id + "' is " + shape_string(r.features.shape()) +
                           ", expected " + shape_string({n, d}));
    }
    w.string(r.id);
    w.f64s(r.features.values());
  }
  write_file_atomic(path, w.bytes());
}

std::vector<FeatureRecord> load_features(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kFeatureMagic, 4)) throw FormatError("features: bad magic", 0);
  const std::size_t count = r.u32();
  const std::size_t n = r.u32();
  const std::size_t d = r.u32();
  std::vector<FeatureRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    FeatureRecord rec;
    rec.id = r.string();
    std::vector<double> v(n * d);
    r.f64s(v);
    rec.features = Tensor({n, d}, std::move(v));
    out.push_back(std::move(rec));
  }
  if (!r.at_end()) throw FormatError("features: trailing bytes after " + std::to_string(count) + " records", r.offset());
  return out;
}

void save_reports(const std::filesystem::path& path, std::span<const ReportRecord> records) {
  std::vector<Json> rows;
  for (const auto& r : records) rows.push_back(Json{{"id", r.id}, {"report", r.report}});
  write_jsonl(path, rows);
}

std::vector<ReportRecord> load_reports(const std::filesystem::path& path) {
  std::vector<ReportRecord> out;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({field<std::string>(rows[i], "id", path, i), field<std::string>(rows[i], "report", path, i)});
  }
  return out;
}

void save_generated(const std::filesystem::path& path, std::span<const GeneratedRecord> records) {
  std::vector<Json> rows;
  for (const auto& r : records) rows.push_back(Json{{"id", r.id}, {"generated", r.generated}, {"logprob", r.logprob}});
  write_jsonl(path, rows);
}

std::vector<GeneratedRecord> load_generated(const std::filesystem::path& path) {
  std::vector<GeneratedRecord> out;
  auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({field<std::string>(rows[i], "id", path, i), field<std::string>(rows[i], "generated", path, i),
                   field<double>(rows[i], "logprob", path, i)});
  }
  return out;
}

const std::vector<std::string>& synthetic_concept_words() {
  static const std::vector<std::string> words{
      "effusion",     "pneumothorax",  "edema",       "cardiomegaly", "atelectasis",  "consolidation",
      "opacity",      "pneumonia",     "nodule",      "mass",         "fracture",     "emphysema",
      "fibrosis",     "hernia",        "calcification", "granuloma",  "scoliosis",    "kyphosis",
      "thickening",   "infiltrate",    "lesion",      "congestion",   "tortuosity",   "hyperinflation",
      "pacemaker",    "catheter",      "stent",       "cavitation",   "bronchiectasis", "lymphadenopathy",
      "osteopenia",   "cardiomyopathy", "pneumoperitoneum", "spondylosis", "aneurysm", "embolism",
      "abscess",      "empyema",       "sarcoidosis", "tuberculosis"};
  return words;
}

std::vector<Tensor> synthetic_patterns(const SyntheticSpec& spec) {
  if (spec.concepts == 0 || spec.concepts > synthetic_concept_words().size()) {
    throw ContractError("synthetic: concept count must be in [1, " +
                        std::to_string(synthetic_concept_words().size()) + "]");
  }
  const std::size_t total = spec.regions * spec.dim;
  const std::size_t block = total / spec.concepts;
  if (block == 0) throw ContractError("synthetic: N·D must be at least the concept count");
  // Patterns depend only on the shape, so every split drawn from the same shape shares them.
  Rng rng(0x5eed0000ULL + spec.concepts * 131 + total);
  std::normal_distribution<double> normal;
  std::vector<Tensor> out;
  for (std::size_t c = 0; c < spec.concepts; ++c) {
    std::vector<double> v(total, 0.0), dir(block);
    double norm = 0.0;
    for (double& x : dir) {
      x = normal(rng);
      norm += x * x;
    }
    const double s = std::sqrt(static_cast<double>(block) / norm);  // unit-RMS entries
    for (std::size_t i = 0; i < block; ++i) v[c * block + i] = dir[i] * s;
    out.emplace_back(Shape{spec.regions, spec.dim}, std::move(v));
  }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.noise < 0.0) throw ContractError("synthetic: noise must be nonnegative");
  const auto patterns = synthetic_patterns(spec);
  const auto& words = synthetic_concept_words();
  SyntheticDataset ds;
  ds.concepts = ConceptVocab(std::vector<std::string>(words.begin(), words.begin() + static_cast<long>(spec.concepts)));
  Rng rng(spec.seed);
  std::bernoulli_distribution active(spec.activation);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t total = spec.regions * spec.dim;
  for (std::size_t i = 0; i < spec.samples; ++i) {
    std::vector<double> y(spec.concepts, 0.0);
    for (double& v : y) v = active(rng) ? 1.0 : 0.0;
    std::vector<double> f(total);
    for (double& x : f) x = spec.noise * noise(rng);
    std::string report;
    for (std::size_t c = 0; c < spec.concepts; ++c) {
      if (y[c] == 0.0) continue;
      const auto pv = patterns[c].values();
      for (std::size_t k = 0; k < total; ++k) f[k] += pv[k];
      if (!report.empty()) report += " ";
      report += "there is " + words[c] + " .";
    }
    if (report.empty()) report = kNoFindingsReport;
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", i);
    ds.features.push_back({id, Tensor({spec.regions, spec.dim}, std::move(f))});
    ds.reports.push_back({id, report});
    ds.targets.push_back(std::move(y));
  }
  return ds;
}

}  // namespace msat
