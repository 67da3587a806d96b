#pragma once

#include <cstddef>
#include <cstdint>

#include "metarecon/tensor.hpp"

namespace metarecon {

/// Inside-the-root guard of rss(); keeps d rss / dx finite at empty pixels.
inline constexpr double kRssEpsilon = 1e-12;

/// Binary Cartesian undersampling pattern P over (H, W). Whole rows (phase
/// encodes) are either acquired or skipped.
struct SamplingMask {
  Tensor matrix;  // (H, W) of {0, 1}
  double ar = 1.0;
  std::size_t acs_lines = 0;
  std::uint64_t seed = 0;

  std::size_t height() const { return matrix.dim(0); }
  std::size_t width() const { return matrix.dim(1); }
  double sampled_fraction() const;
  /// The mask reshaped to (1, H, W, 1) so it broadcasts over coil stacks.
  Tensor broadcastable() const;
};

/// ceil(0.08 H): the default number of fully sampled central rows.
std::size_t default_acs_lines(std::size_t height);

/// Variable-density row mask: the `acs_lines` central rows are always kept,
/// then further rows are drawn without replacement with probability
/// proportional to (1 - |row - H/2| / (H/2))^power until round(H / ar) rows
/// are sampled. ar == 1 gives the full mask.
SamplingMask make_mask(std::size_t height, std::size_t width, double ar, std::size_t acs_lines,
                       std::uint64_t seed, double power = 2.0);

/// Validates a (c, H, W, 2) coil stack against a mask; throws ShapeError.
void check_coil_stack(const Tensor& x, const SamplingMask& mask);

/// f = P F x per coil.
Tensor encode(const Tensor& coils, const SamplingMask& mask);
/// F^H P^T f per coil.
Tensor encode_adjoint(const Tensor& kspace, const SamplingMask& mask);
/// b = x - rho F^H P^T (P F x - f); rho is a one-element tensor.
Tensor dc_step(const Tensor& coils, const Tensor& kspace, const SamplingMask& mask,
               const Tensor& rho);
/// Root sum-of-squares over coils: (c, H, W, 2) -> (H, W).
Tensor rss(const Tensor& coils);
/// Classical zero-filled reconstruction, F^H P^T f.
Tensor zero_filled(const Tensor& kspace, const SamplingMask& mask);

}  // namespace metarecon
