// SPDX-License-Identifier: Apache-2.0
//
// Named parameter registry and the flat checkpoint format:
//   "MSACKPT1", then per tensor until EOF:
//   u32 name length | UTF-8 name | u32 rank | u32 extents[rank] | f64 values (LE)

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msat/tensor.hpp"

namespace msat {

class ParameterSet {
 public:
  /// Registers a tensor handle under `name`; names must be unique.
  void add(std::string name, const Tensor& tensor);

  const Tensor* find(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into the registered tensors. Every parameter must
/// be present with an identical shape; extra entries are ignored.
void assign_parameters(const ParameterSet& params, const NamedTensors& loaded);

}  // namespace msat
