// SPDX-License-Identifier: Apache-2.0
//
// Report normalization and the word vocabulary. Specials occupy ids 0..3.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace msat {

/// Lowercases, maps every character outside [a-z0-9] to a space, splits on spaces.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  static constexpr std::size_t kBos = 0;
  static constexpr std::size_t kEos = 1;
  static constexpr std::size_t kPad = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr const char* kSpecials[4] = {"<bos>", "<eos>", "<pad>", "<unk>"};

  /// Specials only.
  Vocab();
  /// Specials followed by `words` in order; duplicates or special names are a contract error.
  explicit Vocab(const std::vector<std::string>& words);

  /// Keeps tokens with count ≥ min_freq, ordered by count descending then lexicographically.
  static Vocab build(const std::vector<std::vector<std::string>>& reports, std::size_t min_freq);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  /// Space-joined words, stopping at EOS and skipping BOS/PAD.
  std::string decode(std::span<const std::size_t> ids) const;

  /// One token per line, specials first.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace msat
