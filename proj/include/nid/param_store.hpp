// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "nid/tensor.hpp"

namespace nid {

/// Named parameter bank with paired gradient buffers. Iteration order is
/// insertion order so optimizer sweeps are deterministic across runs.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  void accumulate_grad(const std::string& name, const Tensor& g);
  void zero_grads();

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t num_scalars() const;

  /// Order-sensitive FNV-1a hash over all parameter bytes. Used to assert a
  /// frozen model is untouched by downstream stages.
  std::uint64_t checksum() const;

 private:
  struct Entry {
    Tensor value{Tensor::scalar(0.0)};
    Tensor grad{Tensor::scalar(0.0)};
  };
  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> index_;
};

}  // namespace nid
