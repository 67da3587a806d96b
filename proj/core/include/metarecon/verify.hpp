#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metarecon/gradcheck.hpp"
#include "metarecon/networks.hpp"

namespace metarecon {

/// Scalar objective of a parameter store, built with differentiable ops.
using StoreLoss = std::function<Tensor(const ParamStore&)>;

struct CoordinateCheck {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct GradientReport {
  std::vector<CoordinateCheck> checks;
  double max_error = 0.0;
  double floor = 0.0;
};

/// Copy of `store` whose parameters (in ParamStore::all() order) take the given
/// values, none requiring grad.
ParamStore replace_values(const ParamStore& store, std::span<const Tensor> values);

/// Copy of `store` with biases drawn uniformly from [-scale, scale]. Zero
/// biases put ReLU kinks exactly at the evaluation point wherever a receptive
/// field is all zeros, where central differences are meaningless.
ParamStore jitter_biases(const ParamStore& store, double scale, std::uint64_t seed);

/// `count` distinct coordinates drawn round-robin over the parameter kinds
/// (H weights, delta, then per task network weights and rho) so that every
/// group is represented.
std::vector<Coordinate> sample_coordinates(const ParamStore& store, std::size_t count,
                                           std::uint64_t seed);

/// Analytic gradient of `loss` against central differences with step h at the
/// given coordinates. Relative errors use a floor of `floor_fraction` times the
/// largest sampled analytic magnitude.
GradientReport check_gradient(const ParamStore& store, const StoreLoss& loss,
                              std::span<const Coordinate> coords, double h = 1e-5,
                              double floor_fraction = 1e-2);

}  // namespace metarecon
