// SPDX-License-Identifier: Apache-2.0
#include "msat/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "msat/binary_io.hpp"
#include "msat/errors.hpp"

namespace msat {

namespace {
constexpr std::string_view kMagic = "MSACKPT1";
}

void ParameterSet::add(std::string name, const Tensor& tensor) {
  if (!tensor.defined()) throw ContractError("parameter '" + name + "' is undefined");
  if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), tensor);
}

const Tensor* ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [_, t] : entries_) out.push_back(t);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  ByteWriter w;
  w.raw(kMagic);
  for (const auto& [name, t] : tensors) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f64s(t.values());
  }
  write_file_atomic(path, w.bytes());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  ByteReader r(bytes);
  if (r.raw(kMagic.size()) != kMagic) throw FormatError("bad checkpoint magic in " + path.string(), 0);
  NamedTensors out;
  while (!r.at_end()) {
    std::string name = r.string();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    std::vector<double> values(shape_numel(shape));
    r.f64s(values);
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void assign_parameters(const ParameterSet& params, const NamedTensors& loaded) {
  std::unordered_map<std::string_view, const Tensor*> by_name;
  for (const auto& [name, t] : loaded) by_name.emplace(name, &t);
  for (const auto& [name, param] : params.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint has no parameter '" + name + "'");
    const Tensor& src = *it->second;
    if (src.shape() != param.shape()) {
      throw CheckpointError("parameter '" + name + "' has shape " + shape_string(src.shape()) +
                            " in checkpoint but " + shape_string(param.shape()) + " in model");
    }
    Tensor dst = param;
    std::copy(src.values().begin(), src.values().end(), dst.values_mut().begin());
  }
}

}  // namespace msat
