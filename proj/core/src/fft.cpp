#include "metarecon/fft.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "metarecon/errors.hpp"

namespace metarecon {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

// Per-length transform tables. Powers of two run radix-2 Cooley-Tukey on the
// shifted sequence; other lengths use the centered DFT matrix directly.
using CMatrix = Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Plan {
  std::size_t n = 0;
  std::vector<cdouble> twiddles;  // exp(-2 pi i k / n), k < n/2
  CMatrix forward;                // centered DFT (non power of two), symmetric
  CMatrix inverse;
};

const Plan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, Plan> cache;
  auto [it, inserted] = cache.try_emplace(n);
  if (!inserted) return it->second;
  Plan& p = it->second;
  p.n = n;
  const double base = -2.0 * std::numbers::pi / static_cast<double>(n);
  if (is_power_of_two(n)) {
    for (std::size_t k = 0; k < n / 2; ++k) p.twiddles.push_back(std::polar(1.0, base * static_cast<double>(k)));
  } else {
    p.forward.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const auto half = static_cast<long long>(n / 2);
    const auto ln = static_cast<long long>(n);
    for (long long k = 0; k < ln; ++k) {
      for (long long j = 0; j < ln; ++j) {
        // Reduce the phase index exactly before converting to an angle.
        const long long e = (((k - half) * (j - half)) % ln + ln) % ln;
        p.forward(k, j) = std::polar(1.0, base * static_cast<double>(e));
      }
    }
    p.inverse = p.forward.conjugate();
  }
  return p;
}

void radix2(cdouble* data, std::size_t n, std::size_t stride, bool inverse, const Plan& plan,
            std::vector<cdouble>& buf) {
  buf.resize(n);
  // Centering: for even n, ifftshift/fftshift are both a rotation by n/2.
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < n; ++i) buf[i] = data[((i + half) % n) * stride];
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t step = n / len;
    for (std::size_t k = 0; k < len / 2; ++k) {
      const cdouble tw = inverse ? std::conj(plan.twiddles[k * step]) : plan.twiddles[k * step];
      for (std::size_t i = 0; i < n; i += len) {
        const cdouble u = buf[i + k];
        const cdouble v = buf[i + k + len / 2] * tw;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) data[((i + half) % n) * stride] = buf[i];
}

Tensor transform(const Tensor& x, bool inverse) {
  if (x.rank() < 3 || x.dim(x.rank() - 1) != 2) {
    throw ShapeError("fft2c: expected trailing (H,W,2), got " + shape_str(x.shape()));
  }
  const std::size_t h = x.dim(x.rank() - 3);
  const std::size_t w = x.dim(x.rank() - 2);
  const std::size_t plane = h * w;
  if (plane == 0) throw ShapeError("fft2c: empty extent");
  const std::size_t batch = x.numel() / (2 * plane);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < batch; ++b) {
    auto* p = reinterpret_cast<cdouble*>(out.data() + 2 * b * plane);
    fft2c_inplace({p, plane}, h, w, inverse);
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x},
      [inverse](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{inverse ? fft2c(g) : ifft2c(g)};
      },
      inverse ? "ifft2c" : "fft2c");
}

}  // namespace

void fft2c_inplace(std::span<cdouble> plane, std::size_t h, std::size_t w, bool inverse) {
  if (h == 0 || w == 0) throw ShapeError("fft2c: empty extent");
  if (plane.size() != h * w) throw ShapeError("fft2c: plane size mismatch");
  std::vector<cdouble> buf;
  Eigen::Map<CMatrix> m(plane.data(), static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w));
  const Plan& pw = plan_for(w);
  if (is_power_of_two(w)) {
    for (std::size_t y = 0; y < h; ++y) radix2(plane.data() + y * w, w, 1, inverse, pw, buf);
  } else {
    m = m * (inverse ? pw.inverse : pw.forward);
  }
  const Plan& ph = plan_for(h);
  if (is_power_of_two(h)) {
    for (std::size_t x = 0; x < w; ++x) radix2(plane.data() + x, h, w, inverse, ph, buf);
  } else {
    m = (inverse ? ph.inverse : ph.forward) * m;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto& v : plane) v *= scale;
}

Tensor fft2c(const Tensor& x) { return transform(x, false); }
Tensor ifft2c(const Tensor& x) { return transform(x, true); }

}  // namespace metarecon
