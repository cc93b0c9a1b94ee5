// SPDX-License-Identifier: Apache-2.0
#include "msat/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "msat/errors.hpp"

namespace msat {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    char c = raw;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& words) {
  tokens_.assign(std::begin(kSpecials), std::end(kSpecials));
  tokens_.insert(tokens_.end(), words.begin(), words.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw ContractError("vocab: duplicate token '" + tokens_[i] + "'");
  }
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& reports, std::size_t min_freq) {
  if (reports.empty()) throw ContractError("vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : reports)
    for (const auto& t : r) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [t, n] : counts)
    if (n >= min_freq) kept.emplace_back(t, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& [t, _] : kept) words.push_back(t);
  return Vocab(words);
}

std::size_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw RangeError("vocab: id " + std::to_string(id) + " outside [0, " + std::to_string(tokens_.size()) + ")");
  }
  return tokens_[id];
}

std::vector<std::size_t> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (std::size_t i : ids) {
    if (i == kEos) break;
    if (i == kBos || i == kPad) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write vocab file " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read vocab file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.size() < 4 || !std::equal(std::begin(kSpecials), std::end(kSpecials), lines.begin())) {
    throw FormatError("vocab file " + path.string() + " does not start with the four special tokens");
  }
  return Vocab(std::vector<std::string>(lines.begin() + 4, lines.end()));
}

}  // namespace msat
