#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cntm/autodiff.hpp"

namespace cntm {

// Uniform on [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
// For a rank-2 shape [out x in], fan_in = in and fan_out = out; a vector uses its
// length for both.
inline std::vector<double> xavier_values(const ad::Shape& shape, std::mt19937_64& rng) {
  if (shape.empty()) throw DimensionError("xavier_init: shape needs at least one dimension");
  const double fan_out = static_cast<double>(shape.front());
  const double fan_in = static_cast<double>(shape.size() == 1 ? shape.front() : ad::numel(shape) / shape.front());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> out(ad::numel(shape));
  for (double& v : out) v = dist(rng);
  return out;
}

inline ad::Tensor xavier_init(const ad::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::Tensor(shape, xavier_values(shape, rng));
}

inline double xavier_bound(const ad::Shape& shape) {
  const double fan_out = static_cast<double>(shape.front());
  const double fan_in = static_cast<double>(shape.size() == 1 ? shape.front() : ad::numel(shape) / shape.front());
  return std::sqrt(6.0 / (fan_in + fan_out));
}

}  // namespace cntm
