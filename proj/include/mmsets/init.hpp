#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mmsets/error.hpp"
#include "mmsets/tensor.hpp"

namespace mmsets {

/// Uniform(-b, b) with b = sqrt(6 / fan_in).
inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), true);
}

/// Classifier bias b = -log((1 - prior) / prior), so that sigmoid(b) == prior.
inline double prior_bias(double prior) {
  if (!(prior > 0.0 && prior < 1.0)) {
    throw Error(ErrorKind::parameter, "class prior must lie in (0,1), got " + std::to_string(prior));
  }
  return -std::log((1.0 - prior) / prior);
}

inline std::vector<double> init_classifier_bias(std::size_t num_classes, double prior = 0.01) {
  return std::vector<double>(num_classes, prior_bias(prior));
}

}  // namespace mmsets
