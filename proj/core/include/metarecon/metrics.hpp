#pragma once

#include <optional>

#include "metarecon/tensor.hpp"

namespace metarecon {

/// PSNR reported for identical images, where MSE is zero.
inline constexpr double kPsnrCap = 300.0;

struct MetricReport {
  double psnr = 0.0;  // dB
  double ssim = 0.0;
  double nmse = 0.0;
};

/// Gaussian-window SSIM settings (11x11 window, sigma 1.5, K1 0.01, K2 0.03).
struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// 10 log10(max(target)^2 / MSE), capped at kPsnrCap.
double psnr(const Tensor& estimate, const Tensor& target);
/// ||estimate - target||^2 / ||target||^2.
double nmse(const Tensor& estimate, const Tensor& target);

/// Mean SSIM over all valid window positions of two real (H, W) images. The
/// dynamic range defaults to max(target) - min(target). Differentiable in
/// both arguments; the range is treated as a constant.
Tensor ssim(const Tensor& estimate, const Tensor& target,
            std::optional<double> data_range = std::nullopt, const SsimOptions& options = {});

/// Normalized (sum = 1) separable Gaussian window as a (1, 1, k, k) kernel.
Tensor gaussian_window(const SsimOptions& options = {});

MetricReport evaluate(const Tensor& estimate, const Tensor& target);

}  // namespace metarecon
