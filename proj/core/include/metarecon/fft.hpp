#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include "metarecon/tensor.hpp"

namespace metarecon {

using cdouble = std::complex<double>;

bool is_power_of_two(std::size_t n);

/// In-place centered, unitary 2-D DFT of one row-major (h, w) plane:
/// fftshift(fft2(ifftshift(x))) / sqrt(h w). Powers of two use radix-2;
/// other lengths use a cached centered DFT matrix.
void fft2c_inplace(std::span<cdouble> plane, std::size_t h, std::size_t w, bool inverse);

/// Centered unitary 2-D DFT over the trailing (H, W, 2) axes of `x`; leading
/// axes are batched. The DC sample lands at (H/2, W/2).
Tensor fft2c(const Tensor& x);
/// Inverse (and adjoint) of fft2c.
Tensor ifft2c(const Tensor& x);

}  // namespace metarecon
