#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "metarecon/errors.hpp"
#include "metarecon/fft.hpp"
#include "metarecon/ops.hpp"
#include "metarecon/physics.hpp"
#include "oracles.hpp"

using namespace metarecon;

namespace {

// Oracle encode: naive DFT per coil, then elementwise mask.
std::vector<double> oracle_encode(const Tensor& x, const SamplingMask& mask, bool adjoint = false) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> out;
  for (std::size_t j = 0; j < c; ++j) {
    std::vector<double> plane(x.data().begin() + static_cast<std::ptrdiff_t>(2 * j * h * w),
                              x.data().begin() + static_cast<std::ptrdiff_t>(2 * (j + 1) * h * w));
    if (adjoint) {
      for (std::size_t p = 0; p < h * w; ++p) {
        plane[2 * p] *= mask.matrix[p];
        plane[2 * p + 1] *= mask.matrix[p];
      }
      plane = oracle::centered_dft(plane, h, w, true);
    } else {
      plane = oracle::centered_dft(plane, h, w);
      for (std::size_t p = 0; p < h * w; ++p) {
        plane[2 * p] *= mask.matrix[p];
        plane[2 * p + 1] *= mask.matrix[p];
      }
    }
    out.insert(out.end(), plane.begin(), plane.end());
  }
  return out;
}

}  // namespace

TEST_SUITE("encode") {
  TEST_CASE("full mask is the per-coil transform") {
    std::mt19937_64 rng(1);
    const auto x = oracle::random_tensor({3, 8, 8, 2}, rng);
    const auto full = make_mask(8, 8, 1.0, 0, 0);
    CHECK(oracle::max_abs_diff(encode(x, full).data(), fft2c(x).data()) == 0.0);
    CHECK(oracle::max_abs_diff(encode_adjoint(encode(x, full), full).data(), x.data()) < 1e-12);
  }

  TEST_CASE("zero mask gives zero k-space") {
    std::mt19937_64 rng(2);
    const auto x = oracle::random_tensor({2, 8, 8, 2}, rng);
    SamplingMask empty{Tensor::zeros({8, 8})};
    const auto f = encode(x, empty);
    for (double v : f.data()) CHECK(v == 0.0);
  }

  TEST_CASE("random masked case matches the oracle composition") {
    std::mt19937_64 rng(3);
    const auto x = oracle::random_tensor({2, 8, 8, 2}, rng);
    const auto mask = make_mask(8, 8, 2.0, 2, 17);
    CHECK(oracle::max_abs_diff(encode(x, mask).data(), oracle_encode(x, mask)) < 1e-10);
    CHECK(oracle::max_abs_diff(encode_adjoint(x, mask).data(), oracle_encode(x, mask, true)) < 1e-10);
  }

  TEST_CASE("adjoint dot-product identity") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const auto mask = make_mask(16, 16, 1.0 + trial % 5, 2, static_cast<std::uint64_t>(trial));
      const auto x = oracle::random_tensor({2, 16, 16, 2}, rng);
      const auto f = oracle::random_tensor({2, 16, 16, 2}, rng);
      const double lhs = oracle::dot(encode(x, mask).data(), f.data());
      const double rhs = oracle::dot(x.data(), encode_adjoint(f, mask).data());
      CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)) < 1e-12);
    }
  }

  TEST_CASE("shape mismatch is rejected") {
    const auto mask = make_mask(8, 8, 1.0, 0, 0);
    CHECK_THROWS_AS(encode(Tensor::zeros({2, 8, 4, 2}), mask), ShapeError);
    CHECK_THROWS_AS(encode(Tensor::zeros({8, 8, 2}), mask), ShapeError);
  }
}

TEST_SUITE("dc_step") {
  TEST_CASE("rho = 0 is the identity") {
    std::mt19937_64 rng(5);
    const auto x = oracle::random_tensor({2, 8, 8, 2}, rng);
    const auto f = oracle::random_tensor({2, 8, 8, 2}, rng);
    const auto mask = make_mask(8, 8, 2.0, 2, 1);
    CHECK(oracle::max_abs_diff(dc_step(x, f, mask, Tensor::scalar(0.0)).data(), x.data()) == 0.0);
  }

  TEST_CASE("consistent data is a fixed point") {
    std::mt19937_64 rng(6);
    const auto x = oracle::random_tensor({2, 8, 8, 2}, rng);
    const auto full = make_mask(8, 8, 1.0, 0, 0);
    const auto b = dc_step(x, fft2c(x), full, Tensor::scalar(0.7));
    CHECK(oracle::max_abs_diff(b.data(), x.data()) < 1e-12);
  }

  TEST_CASE("matches the hand-composed oracle") {
    std::mt19937_64 rng(7);
    const auto x = oracle::random_tensor({4, 8, 8, 2}, rng);
    const auto f = oracle::random_tensor({4, 8, 8, 2}, rng);
    const auto mask = make_mask(8, 8, 2.0, 2, 3);
    const double rho = 0.5;
    auto residual = oracle_encode(x, mask);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= f[i];
    const auto back = oracle_encode(Tensor(x.shape(), residual), mask, true);
    std::vector<double> expected(x.numel());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = x[i] - rho * back[i];
    CHECK(oracle::max_abs_diff(dc_step(x, f, mask, Tensor::scalar(rho)).data(), expected) < 1e-10);
  }

  TEST_CASE("never increases the data residual for 0 < rho <= 1") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const auto mask = make_mask(16, 16, 4.0, 2, static_cast<std::uint64_t>(trial));
      const auto x = oracle::random_tensor({2, 16, 16, 2}, rng);
      const auto f = encode(oracle::random_tensor({2, 16, 16, 2}, rng), mask);
      const double rho = 0.05 + 0.95 * (trial / 19.0);
      const auto before = oracle::norm(sub(encode(x, mask), f).data());
      const auto b = dc_step(x, f, mask, Tensor::scalar(rho));
      const auto after = oracle::norm(sub(encode(b, mask), f).data());
      CHECK(after <= before * (1.0 + 1e-12));
    }
  }
}

TEST_SUITE("rss") {
  TEST_CASE("single coil is the magnitude") {
    std::mt19937_64 rng(9);
    const auto x = oracle::random_tensor({1, 6, 6, 2}, rng);
    const auto r = rss(x);
    for (std::size_t p = 0; p < 36; ++p) {
      CHECK(std::abs(r[p] - std::hypot(x[2 * p], x[2 * p + 1])) <= 1e-6);
    }
  }

  TEST_CASE("3-4-5") {
    const auto r = rss(Tensor({2, 1, 1, 2}, {3.0, 0.0, 4.0, 0.0}));
    CHECK(r[0] == doctest::Approx(5.0).epsilon(1e-12));
  }

  TEST_CASE("18 coils against a direct sum") {
    std::mt19937_64 rng(10);
    const auto x = oracle::random_tensor({18, 8, 8, 2}, rng);
    const auto r = rss(x);
    for (std::size_t p = 0; p < 64; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 18; ++j) {
        const double re = x[2 * (j * 64 + p)];
        const double im = x[2 * (j * 64 + p) + 1];
        acc += re * re + im * im;
      }
      CHECK(std::abs(r[p] - std::sqrt(acc + kRssEpsilon)) < 1e-12);
    }
  }

  TEST_CASE("invariant to a global phase") {
    std::mt19937_64 rng(11);
    const auto x = oracle::random_tensor({4, 8, 8, 2}, rng);
    const double phi = 0.83;
    std::vector<double> rotated(x.numel());
    for (std::size_t p = 0; p < x.numel() / 2; ++p) {
      const auto z = std::complex<double>(x[2 * p], x[2 * p + 1]) * std::polar(1.0, phi);
      rotated[2 * p] = z.real();
      rotated[2 * p + 1] = z.imag();
    }
    CHECK(oracle::max_abs_diff(rss(x).data(), rss(Tensor(x.shape(), rotated)).data()) < 1e-12);
  }

  TEST_CASE("nonnegative with a finite gradient at zero") {
    const auto x = Tensor::zeros({2, 4, 4, 2}).detach(true);
    const std::vector<Tensor> params{x};
    const auto r = rss(x);
    for (double v : r.data()) CHECK(v >= 0.0);
    const auto g = backward(sum(r), params);
    for (double v : g[0].data()) CHECK(std::isfinite(v));
  }
}

TEST_SUITE("make_mask") {
  TEST_CASE("ar = 1 samples everything") {
    const auto m = make_mask(16, 16, 1.0, 2, 5);
    CHECK(m.sampled_fraction() == 1.0);
  }

  TEST_CASE("sampled fraction over 100 seeds at ar = 4") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto m = make_mask(64, 64, 4.0, 8, seed);
      CHECK(m.sampled_fraction() >= 0.2375);
      CHECK(m.sampled_fraction() <= 0.2625);
    }
  }

  TEST_CASE("standard sweep: fraction, ACS rows, idempotence, determinism") {
    for (double ar : {4.0, 5.0, 6.0}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t h = 48;
        const auto acs = default_acs_lines(h);
        const auto m = make_mask(h, 48, ar, acs, seed);
        CHECK(std::abs(m.sampled_fraction() - 1.0 / ar) <= 0.05 / ar);
        for (std::size_t r = h / 2 - acs / 2; r < h / 2 - acs / 2 + acs; ++r) {
          for (std::size_t c = 0; c < 48; ++c) CHECK(m.matrix[r * 48 + c] == 1.0);
        }
        const auto twice = mul(m.matrix, m.matrix);
        CHECK(oracle::max_abs_diff(twice.data(), m.matrix.data()) == 0.0);
        CHECK(oracle::max_abs_diff(make_mask(h, 48, ar, acs, seed).matrix.data(), m.matrix.data()) == 0.0);
      }
    }
    CHECK(default_acs_lines(48) == 4);
  }

  TEST_CASE("sampling density favours the center") {
    std::vector<int> hits(64, 0);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto m = make_mask(64, 4, 6.0, 4, seed);
      for (std::size_t r = 0; r < 64; ++r) hits[r] += m.matrix[r * 4] > 0.0;
    }
    int inner = 0, outer = 0;
    for (std::size_t r = 0; r < 64; ++r) {
      const auto d = std::abs(static_cast<int>(r) - 32);
      if (d >= 3 && d < 12) inner += hits[r];
      if (d >= 20) outer += hits[r];
    }
    CHECK(inner > 2 * outer);
  }

  TEST_CASE("parameter errors") {
    CHECK_THROWS_AS(make_mask(16, 16, 0.5, 2, 0), ParameterError);
    CHECK_THROWS_AS(make_mask(16, 16, 8.0, 4, 0), ParameterError);
    CHECK_THROWS_AS(make_mask(16, 16, 2.0, 16, 0), ParameterError);
  }
}

TEST_SUITE("zero_filled") {
  TEST_CASE("fully sampled noiseless data is recovered") {
    std::mt19937_64 rng(12);
    const auto x = oracle::random_tensor({3, 16, 16, 2}, rng);
    const auto full = make_mask(16, 16, 1.0, 0, 0);
    CHECK(oracle::max_abs_diff(zero_filled(encode(x, full), full).data(), x.data()) < 1e-12);
  }

  TEST_CASE("zero k-space gives a zero image") {
    const auto mask = make_mask(16, 16, 4.0, 2, 0);
    const auto img = zero_filled(Tensor::zeros({2, 16, 16, 2}), mask);
    for (double v : img.data()) CHECK(v == 0.0);
  }
}
