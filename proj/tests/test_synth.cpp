#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "metarecon/errors.hpp"
#include "metarecon/fft.hpp"
#include "metarecon/physics.hpp"
#include "metarecon/synth.hpp"
#include "oracles.hpp"

using namespace metarecon;

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("metarecon_test_" + name);
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("standard spec has four deterministic contrasts") {
    const PhantomSpec spec = PhantomSpec::standard(48, 48, 3);
    REQUIRE(spec.count() == 4);
    CHECK(spec.contrasts[0].name == "Sag-T2");
    CHECK(spec.contrasts[3].name == "Cor-PD");
    const auto a = gen_phantom(spec, 5);
    const auto b = gen_phantom(PhantomSpec::standard(48, 48, 3), 5);
    REQUIRE(a.size() == 4);
    for (std::size_t m = 0; m < 4; ++m) {
      CHECK(a[m].shape() == Shape{48, 48});
      CHECK(bit_equal(a[m], b[m]));
    }
    const auto c = gen_phantom(PhantomSpec::standard(48, 48, 4), 5);
    CHECK(oracle::max_abs_diff(a[0].data(), c[0].data()) > 0.0);
  }

  TEST_CASE("zero intensities give zero images") {
    PhantomSpec spec = PhantomSpec::standard(16, 16, 0);
    for (Ellipse& e : spec.ellipses) std::fill(e.intensity.begin(), e.intensity.end(), 0.0);
    for (const Tensor& img : gen_phantom(spec, 0)) {
      for (double v : img.data()) CHECK(v == 0.0);
    }
  }

  TEST_CASE("degenerate ellipses and bad intensities are rejected") {
    PhantomSpec spec = PhantomSpec::standard(16, 16, 0);
    spec.ellipses[2].ax = 0.0;
    CHECK_THROWS_AS(gen_phantom(spec, 0), ParameterError);
    spec = PhantomSpec::standard(16, 16, 0);
    spec.ellipses[1].intensity[0] = 1.5;
    CHECK_THROWS_AS(gen_phantom(spec, 0), ParameterError);
    spec = PhantomSpec::standard(16, 16, 0);
    spec.ellipses[1].intensity.pop_back();
    CHECK_THROWS_AS(gen_phantom(spec, 0), ParameterError);
  }

  TEST_CASE("contrasts share one support and differ in intensity") {
    for (std::size_t slice = 0; slice < 10; ++slice) {
      const auto imgs = gen_phantom(PhantomSpec::standard(48, 48, 1), slice);
      for (std::size_t p = 0; p < 48 * 48; ++p) {
        const bool on = imgs[0][p] != 0.0;
        for (std::size_t m = 1; m < 4; ++m) CHECK((imgs[m][p] != 0.0) == on);
      }
      CHECK(oracle::max_abs_diff(imgs[0].data(), imgs[2].data()) > 0.1);
      CHECK(oracle::max_abs_diff(imgs[0].data(), imgs[1].data()) > 0.1);
    }
  }

  TEST_CASE("neighbouring slices change smoothly") {
    const PhantomSpec spec = PhantomSpec::standard(48, 48, 2);
    const auto a = gen_phantom(spec, 3), b = gen_phantom(spec, 4), far = gen_phantom(spec, 9);
    std::size_t near_changes = 0, far_changes = 0;
    for (std::size_t p = 0; p < 48 * 48; ++p) {
      near_changes += a[2][p] != b[2][p];
      far_changes += a[2][p] != far[2][p];
    }
    CHECK(near_changes > 0);
    CHECK(near_changes < 48 * 48 / 8);
    CHECK(far_changes > near_changes);
  }
}

TEST_SUITE("sensitivities") {
  TEST_CASE("sum of squares is one everywhere") {
    const Tensor s = gen_sensitivities(6, 20, 24, 9);
    CHECK(s.shape() == Shape{6, 20, 24, 2});
    for (std::size_t p = 0; p < 20 * 24; ++p) {
      double ss = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        const std::size_t k = 2 * (c * 20 * 24 + p);
        ss += s[k] * s[k] + s[k + 1] * s[k + 1];
      }
      CHECK(std::abs(ss - 1.0) < 1e-12);
    }
  }

  TEST_CASE("one coil has unit magnitude") {
    const Tensor s = gen_sensitivities(1, 8, 8, 1);
    for (std::size_t p = 0; p < 64; ++p) {
      CHECK(std::abs(std::hypot(s[2 * p], s[2 * p + 1]) - 1.0) < 1e-12);
    }
  }

  TEST_CASE("rss of weighted coils recovers the phantom magnitude") {
    const auto img = gen_phantom(PhantomSpec::standard(32, 32, 0), 0)[1];
    const Tensor s = gen_sensitivities(4, 32, 32, 2);
    const auto acq = simulate_acquisition(img, s, make_mask(32, 32, 1.0, 0, 0), 0.0, 0);
    const Tensor r = rss(acq.coils);
    for (std::size_t p = 0; p < img.numel(); ++p) {
      CHECK(std::abs(r[p] - std::sqrt(img[p] * img[p] + kRssEpsilon)) < 1e-10);
    }
  }

  TEST_CASE("zero coils is rejected") {
    CHECK_THROWS_AS(gen_sensitivities(0, 8, 8, 1), ParameterError);
  }
}

TEST_SUITE("acquisition") {
  const Tensor img = gen_phantom(PhantomSpec::standard(16, 16, 0), 0)[0];
  const Tensor sens = gen_sensitivities(2, 16, 16, 5);

  TEST_CASE("noiseless full sampling is recovered exactly") {
    const SamplingMask full = make_mask(16, 16, 1.0, 0, 0);
    const auto acq = simulate_acquisition(img, sens, full, 0.0, 1);
    CHECK(oracle::max_abs_diff(zero_filled(acq.kspace, full).data(), acq.coils.data()) < 1e-12);
  }

  TEST_CASE("noiseless samples match the DFT oracle") {
    const SamplingMask mask = make_mask(16, 16, 4.0, 2, 3);
    const auto acq = simulate_acquisition(img, sens, mask, 0.0, 1);
    for (std::size_t c = 0; c < 2; ++c) {
      const std::vector<double> plane(acq.coils.data().begin() + 512 * c,
                                      acq.coils.data().begin() + 512 * (c + 1));
      const auto ref = oracle::centered_dft(plane, 16, 16);
      for (std::size_t p = 0; p < 256; ++p) {
        for (int part = 0; part < 2; ++part) {
          const double want = mask.matrix[p] * ref[2 * p + part];
          CHECK(std::abs(acq.kspace[512 * c + 2 * p + part] - want) < 1e-10);
        }
      }
    }
  }

  TEST_CASE("noise depends on the seed, signal does not") {
    const SamplingMask mask = make_mask(16, 16, 2.0, 2, 3);
    const auto a = simulate_acquisition(img, sens, mask, 0.01, 1);
    const auto b = simulate_acquisition(img, sens, mask, 0.01, 2);
    const auto a2 = simulate_acquisition(img, sens, mask, 0.01, 1);
    const auto clean = simulate_acquisition(img, sens, mask, 0.0, 1);
    CHECK(bit_equal(a.coils, b.coils));
    CHECK(bit_equal(a.kspace, a2.kspace));
    CHECK(oracle::max_abs_diff(a.kspace.data(), b.kspace.data()) > 0.0);
    // Noise only where sampled, with E|n|^2 = sigma^2.
    double power = 0.0;
    std::size_t count = 0;
    for (std::size_t idx = 0; idx < a.kspace.numel(); ++idx) {
      const double n = a.kspace[idx] - clean.kspace[idx];
      if (mask.matrix[(idx / 2) % 256] == 0.0) {
        CHECK(a.kspace[idx] == 0.0);
      } else {
        power += n * n;
        ++count;
      }
    }
    const double per_complex = 2.0 * power / static_cast<double>(count);
    CHECK(per_complex == doctest::Approx(1e-4).epsilon(0.2));
  }

  TEST_CASE("shape mismatch is rejected") {
    const SamplingMask mask = make_mask(16, 16, 1.0, 0, 0);
    CHECK_THROWS_AS(simulate_acquisition(Tensor::zeros({8, 8}), sens, mask, 0.0, 0), ShapeError);
    CHECK_THROWS_AS(simulate_acquisition(img, sens, make_mask(8, 8, 1.0, 0, 0), 0.0, 0),
                    ShapeError);
  }
}

TEST_SUITE("datasets") {
  TEST_CASE("synthesized slices satisfy the dataset invariants") {
    SynthConfig cfg;
    cfg.height = cfg.width = 32;
    cfg.train_slices = 3;
    cfg.test_slices = 1;
    const auto splits = synthesize(cfg);
    REQUIRE(splits.size() == 4);
    for (const TaskSplit& split : splits) {
      CHECK(split.train.slices.size() == 3);
      CHECK(split.test.slices.size() == 1);
      for (const Slice& s : split.train.slices) {
        CHECK(bit_equal(s.target, rss(s.coils)));
        for (double v : s.target.data()) CHECK(v >= 0.0);
        CHECK(s.mask.sampled_fraction() == doctest::Approx(0.25).epsilon(0.1));
      }
    }
    CHECK(oracle::max_abs_diff(splits[0].train.slices[0].mask.matrix.data(),
                               splits[1].train.slices[0].mask.matrix.data()) > 0.0);
  }

  TEST_CASE("synthesis is a pure function of the config") {
    SynthConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.train_slices = 2;
    cfg.test_slices = 1;
    const auto a = synthesize(cfg), b = synthesize(cfg);
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t s = 0; s < 2; ++s) {
        CHECK(bit_equal(a[t].train.slices[s].kspace, b[t].train.slices[s].kspace));
        CHECK(bit_equal(a[t].train.slices[s].target, b[t].train.slices[s].target));
      }
    }
  }

  TEST_CASE("write then read is bitwise equal and fast at the default size") {
    SynthConfig cfg;
    const auto start = std::chrono::steady_clock::now();
    const auto splits = synthesize(cfg);
    std::vector<std::filesystem::path> paths;
    for (std::size_t t = 0; t < splits.size(); ++t) {
      paths.push_back(temp_path("ds" + std::to_string(t) + ".mrds"));
      write_dataset(splits[t].train, paths.back());
    }
    std::vector<TaskDataset> back;
    for (const auto& p : paths) back.push_back(read_dataset(p));
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(seconds < 1.0);
    for (std::size_t t = 0; t < splits.size(); ++t) {
      const TaskDataset& a = splits[t].train;
      const TaskDataset& b = back[t];
      CHECK(a.name == b.name);
      CHECK(a.ar == b.ar);
      CHECK(a.noise_sigma == b.noise_sigma);
      REQUIRE(a.slices.size() == b.slices.size());
      for (std::size_t s = 0; s < a.slices.size(); ++s) {
        CHECK(bit_equal(a.slices[s].coils, b.slices[s].coils));
        CHECK(bit_equal(a.slices[s].kspace, b.slices[s].kspace));
        CHECK(bit_equal(a.slices[s].mask.matrix, b.slices[s].mask.matrix));
        CHECK(bit_equal(a.slices[s].target, b.slices[s].target));
      }
      std::filesystem::remove(paths[t]);
    }
  }

  TEST_CASE("corrupt files raise format errors") {
    SynthConfig cfg;
    cfg.height = cfg.width = 8;
    cfg.train_slices = 1;
    cfg.test_slices = 1;
    const auto ds = synthesize(cfg)[0].train;
    const auto path = temp_path("bad.mrds");

    write_dataset(ds, path);
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.write("MRCK", 4);
    }
    CHECK_THROWS_AS(read_dataset(path), BadMagicError);

    write_dataset(ds, path);
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(4);
      const std::uint32_t v = 2;
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
    CHECK_THROWS_AS(read_dataset(path), VersionMismatchError);

    write_dataset(ds, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(read_dataset(path), TruncatedError);

    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_dataset(path), IoError);
    CHECK_THROWS_AS(write_dataset(ds, "/nonexistent-dir/x.mrds"), IoError);
  }
}
