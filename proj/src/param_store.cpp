// SPDX-License-Identifier: Apache-2.0
#include "nid/param_store.hpp"

#include <cstring>
#include <stdexcept>

namespace nid {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (has(name)) throw std::invalid_argument("ParamStore: duplicate param '" + name + "'");
  Entry e;
  e.grad = Tensor::zeros(value.shape());
  e.value = std::move(value);
  order_.push_back(name);
  return index_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no param '" + name + "'");
  return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no param '" + name + "'");
  return it->second.value;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no param '" + name + "'");
  return it->second.grad;
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g) {
  Tensor& dst = grad(name);
  if (!dst.same_shape(g))
    throw ShapeError("ParamStore: grad shape " + g.shape_str() + " vs param " + dst.shape_str() +
                     " for '" + name + "'");
  for (int i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void ParamStore::zero_grads() {
  for (auto& name : order_) index_[name].grad.fill(0.0);
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (auto& name : order_) n += static_cast<std::size_t>(index_.at(name).value.size());
  return n;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* p, std::size_t n) {
    auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (auto& name : order_) {
    mix(name.data(), name.size());
    const Tensor& t = index_.at(name).value;
    mix(t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  }
  return h;
}

}  // namespace nid
