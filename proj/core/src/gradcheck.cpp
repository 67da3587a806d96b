#include "metarecon/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "metarecon/errors.hpp"

namespace metarecon {

namespace {

Tensor with_value(const Tensor& t, std::size_t index, double value) {
  std::vector<double> v(t.data().begin(), t.data().end());
  v.at(index) = value;
  return Tensor(t.shape(), std::move(v));
}

}  // namespace

double finite_diff_at(const ScalarFn& f, std::span<const Tensor> params, Coordinate at, double h) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be positive");
  std::vector<Tensor> probe(params.begin(), params.end());
  const Tensor& base = params[at.param];
  const double p = base[at.index];
  probe[at.param] = with_value(base, at.index, p + h);
  const double up = f(probe);
  probe[at.param] = with_value(base, at.index, p - h);
  const double down = f(probe);
  return (up - down) / (2.0 * h);
}

std::vector<Tensor> finite_diff_gradient(const ScalarFn& f, std::span<const Tensor> params,
                                         double h) {
  std::vector<Tensor> grads;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<double> g(params[k].numel());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = finite_diff_at(f, params, {k, i}, h);
    grads.emplace_back(params[k].shape(), std::move(g));
  }
  return grads;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double gradient_floor(std::span<const double> gradient, double fraction) {
  double peak = 0.0;
  for (double v : gradient) peak = std::max(peak, std::abs(v));
  return std::max(fraction * peak, 1e-300);
}

}  // namespace metarecon
