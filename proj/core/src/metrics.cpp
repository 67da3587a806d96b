#include "metarecon/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "metarecon/errors.hpp"
#include "metarecon/ops.hpp"

namespace metarecon {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

double psnr(const Tensor& estimate, const Tensor& target) {
  check_pair(estimate, target, "psnr");
  const auto t = target.data();
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  if (t.empty() || *lo == *hi) throw ParameterError("psnr: target has zero dynamic range");
  double mse = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = estimate[i] - t[i];
    mse += d * d;
  }
  mse /= static_cast<double>(t.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10((*hi) * (*hi) / mse));
}

double nmse(const Tensor& estimate, const Tensor& target) {
  check_pair(estimate, target, "nmse");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const double d = estimate[i] - target[i];
    num += d * d;
    den += target[i] * target[i];
  }
  if (den == 0.0) throw ParameterError("nmse: target is identically zero");
  return num / den;
}

Tensor gaussian_window(const SsimOptions& options) {
  const std::size_t k = options.window;
  std::vector<double> g1(k);
  const double c = static_cast<double>(k - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double d = static_cast<double>(i) - c;
    g1[i] = std::exp(-d * d / (2.0 * options.sigma * options.sigma));
    total += g1[i];
  }
  std::vector<double> g2(k * k);
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t x = 0; x < k; ++x) g2[y * k + x] = g1[y] * g1[x] / (total * total);
  }
  return Tensor({1, 1, k, k}, std::move(g2));
}

Tensor ssim(const Tensor& estimate, const Tensor& target, std::optional<double> data_range,
            const SsimOptions& options) {
  check_pair(estimate, target, "ssim");
  if (estimate.rank() != 2) throw ShapeError("ssim: expected (H,W) images");
  const std::size_t h = estimate.dim(0);
  const std::size_t w = estimate.dim(1);
  if (h < options.window || w < options.window) {
    throw ParameterError("ssim: image " + shape_str(estimate.shape()) + " smaller than the " +
                         std::to_string(options.window) + "-pixel window");
  }
  double range = 0.0;
  if (data_range) {
    range = *data_range;
  } else {
    const auto t = target.data();
    const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
    range = *hi - *lo;
  }
  if (!(range > 0.0)) throw ParameterError("ssim: dynamic range must be positive");
  const double c1 = (options.k1 * range) * (options.k1 * range);
  const double c2 = (options.k2 * range) * (options.k2 * range);

  const Tensor window = gaussian_window(options);
  auto filter = [&](const Tensor& img) { return conv2d(reshape(img, {1, h, w}), window, 0); };
  const Tensor mx = filter(estimate);
  const Tensor my = filter(target);
  const Tensor sxx = sub(filter(square(estimate)), square(mx));
  const Tensor syy = sub(filter(square(target)), square(my));
  const Tensor sxy = sub(filter(mul(estimate, target)), mul(mx, my));

  const Tensor num = mul(add_scalar(mul_scalar(mul(mx, my), 2.0), c1),
                         add_scalar(mul_scalar(sxy, 2.0), c2));
  const Tensor den = mul(add_scalar(add(square(mx), square(my)), c1), add_scalar(add(sxx, syy), c2));
  return mean(div(num, den));
}

MetricReport evaluate(const Tensor& estimate, const Tensor& target) {
  NoGradGuard guard;
  return {psnr(estimate, target), ssim(estimate, target).item(), nmse(estimate, target)};
}

}  // namespace metarecon
