// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "nid/tensor.hpp"

namespace nid {

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) {
  // Scramble so that nearby seeds give unrelated streams.
  return Rng(seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline Tensor uniform_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace nid
