#include "metarecon/physics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "metarecon/errors.hpp"
#include "metarecon/fft.hpp"
#include "metarecon/ops.hpp"

namespace metarecon {

double SamplingMask::sampled_fraction() const {
  double ones = 0.0;
  for (double v : matrix.data()) ones += v;
  return ones / static_cast<double>(matrix.numel());
}

Tensor SamplingMask::broadcastable() const {
  return Tensor({1, height(), width(), 1}, {matrix.data().begin(), matrix.data().end()});
}

std::size_t default_acs_lines(std::size_t height) {
  return static_cast<std::size_t>(std::ceil(0.08 * static_cast<double>(height)));
}

SamplingMask make_mask(std::size_t height, std::size_t width, double ar, std::size_t acs_lines,
                       std::uint64_t seed, double power) {
  if (height == 0 || width == 0) throw ParameterError("mask extents must be positive");
  if (!(ar >= 1.0)) throw ParameterError("acceleration rate must be >= 1");
  if (acs_lines >= height && ar > 1.0) throw ParameterError("acs_lines must be below the row count");

  SamplingMask mask;
  mask.ar = ar;
  mask.acs_lines = acs_lines;
  mask.seed = seed;
  if (ar == 1.0) {
    mask.matrix = Tensor::full({height, width}, 1.0);
    return mask;
  }

  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(height) / ar));
  if (acs_lines > budget) {
    throw ParameterError("acceleration rate " + std::to_string(ar) + " leaves " +
                         std::to_string(budget) + " rows, fewer than " +
                         std::to_string(acs_lines) + " ACS lines");
  }

  const std::size_t center = height / 2;
  const std::size_t acs_begin = center - acs_lines / 2;
  std::vector<bool> keep(height, false);
  for (std::size_t r = acs_begin; r < acs_begin + acs_lines; ++r) keep[r] = true;

  const double half = static_cast<double>(height) / 2.0;
  std::vector<double> weight(height, 0.0);
  for (std::size_t r = 0; r < height; ++r) {
    if (keep[r]) continue;
    const double d = std::abs(static_cast<double>(r) - static_cast<double>(center)) / half;
    weight[r] = std::pow(std::max(0.0, 1.0 - d), power);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t drawn = acs_lines; drawn < budget; ++drawn) {
    double total = 0.0;
    for (std::size_t r = 0; r < height; ++r) total += keep[r] ? 0.0 : weight[r];
    std::size_t pick = height;
    if (total > 0.0) {
      double u = uniform(rng) * total;
      for (std::size_t r = 0; r < height; ++r) {
        if (keep[r] || weight[r] == 0.0) continue;
        pick = r;
        u -= weight[r];
        if (u < 0.0) break;
      }
    } else {
      // Only zero-density rows remain (the outermost edge); take them in order.
      for (std::size_t r = 0; r < height && pick == height; ++r) {
        if (!keep[r]) pick = r;
      }
    }
    keep[pick] = true;
  }

  std::vector<double> values(height * width, 0.0);
  for (std::size_t r = 0; r < height; ++r) {
    if (keep[r]) std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(r * width), width, 1.0);
  }
  mask.matrix = Tensor({height, width}, std::move(values));
  return mask;
}

void check_coil_stack(const Tensor& x, const SamplingMask& mask) {
  if (x.rank() != 4 || x.dim(3) != 2 || x.dim(0) == 0) {
    throw ShapeError("expected a (c,H,W,2) coil stack, got " + shape_str(x.shape()));
  }
  if (x.dim(1) != mask.height() || x.dim(2) != mask.width()) {
    throw ShapeError("coil stack " + shape_str(x.shape()) + " does not match mask " +
                     shape_str(mask.matrix.shape()));
  }
}

Tensor encode(const Tensor& coils, const SamplingMask& mask) {
  check_coil_stack(coils, mask);
  return mul(fft2c(coils), mask.broadcastable());
}

Tensor encode_adjoint(const Tensor& kspace, const SamplingMask& mask) {
  check_coil_stack(kspace, mask);
  return ifft2c(mul(kspace, mask.broadcastable()));
}

Tensor dc_step(const Tensor& coils, const Tensor& kspace, const SamplingMask& mask,
               const Tensor& rho) {
  if (coils.shape() != kspace.shape()) {
    throw ShapeError("dc_step: image " + shape_str(coils.shape()) + " vs k-space " +
                     shape_str(kspace.shape()));
  }
  if (rho.numel() != 1) throw ShapeError("dc_step: rho must be a scalar");
  const Tensor residual = sub(encode(coils, mask), kspace);
  return sub(coils, mul(reshape(rho, {}), encode_adjoint(residual, mask)));
}

Tensor rss(const Tensor& coils) {
  if (coils.rank() != 4 || coils.dim(3) != 2 || coils.dim(0) == 0) {
    throw ShapeError("rss: expected a (c,H,W,2) coil stack, got " + shape_str(coils.shape()));
  }
  const std::size_t h = coils.dim(1);
  const std::size_t w = coils.dim(2);
  const Tensor energy = sum_to(square(coils), {1, h, w, 1});
  return reshape(sqrt(add_scalar(energy, kRssEpsilon)), {h, w});
}

Tensor zero_filled(const Tensor& kspace, const SamplingMask& mask) {
  return encode_adjoint(kspace, mask);
}

}  // namespace metarecon
