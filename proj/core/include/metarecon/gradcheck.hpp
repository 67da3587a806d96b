#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "metarecon/tensor.hpp"

namespace metarecon {

/// Scalar objective evaluated on a full set of parameter values.
using ScalarFn = std::function<double(std::span<const Tensor>)>;

struct Coordinate {
  std::size_t param = 0;
  std::size_t index = 0;
};

/// Central difference (f(p + h e) - f(p - h e)) / 2h at one coordinate.
double finite_diff_at(const ScalarFn& f, std::span<const Tensor> params, Coordinate at, double h);

/// Central differences for every coordinate of every parameter.
std::vector<Tensor> finite_diff_gradient(const ScalarFn& f, std::span<const Tensor> params,
                                         double h);

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero components from
/// turning rounding noise into large relative errors.
double relative_error(double a, double b, double floor = 1e-6);

/// Floor for relative_error when checking a whole gradient: `fraction` of its
/// largest magnitude, so tiny components are judged against the gradient's
/// scale rather than their own.
double gradient_floor(std::span<const double> gradient, double fraction = 1e-2);

}  // namespace metarecon
