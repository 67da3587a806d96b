#include "metarecon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "binary_io.hpp"
#include "metarecon/errors.hpp"
#include "metarecon/fft.hpp"

namespace metarecon {

namespace {

double coord(std::size_t i, std::size_t n) {
  return 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 1.0;
}

bool inside(const Ellipse& e, double y, double x) {
  const double dy = y - e.cy, dx = x - e.cx;
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = dy * c + dx * s;
  const double v = -dy * s + dx * c;
  return (u * u) / (e.ay * e.ay) + (v * v) / (e.ax * e.ax) <= 1.0;
}

// Per-tissue phases for the slice motion, derived from the phantom seed.
std::vector<double> motion_phases(const PhantomSpec& spec) {
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> out(spec.ellipses.size());
  for (double& p : out) p = phase(rng);
  return out;
}

}  // namespace

void PhantomSpec::validate() const {
  if (height == 0 || width == 0) throw ParameterError("phantom extents must be positive");
  if (contrasts.empty()) throw ParameterError("phantom needs at least one contrast");
  for (const Ellipse& e : ellipses) {
    if (!(e.ay > 0.0) || !(e.ax > 0.0)) throw ParameterError("ellipse axes must be positive");
    if (e.intensity.size() != contrasts.size()) {
      throw ParameterError("ellipse needs one intensity per contrast");
    }
    for (double v : e.intensity) {
      if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("intensities must lie in [0, 1]");
    }
  }
}

PhantomSpec PhantomSpec::standard(std::size_t height, std::size_t width, std::uint64_t seed) {
  PhantomSpec spec;
  spec.height = height;
  spec.width = width;
  spec.seed = seed;
  spec.contrasts = {{"Sag-T2", false}, {"Cor-T2", true}, {"Sag-PD", false}, {"Cor-PD", true}};

  struct Tissue {
    double cy, cx, ay, ax, angle, t2, pd;
  };
  // Soft tissue disc, femur, tibia, two cartilage plates, fluid, patella,
  // ligament.
  const Tissue layout[] = {
      {0.00, 0.00, 0.85, 0.85, 0.00, 0.25, 0.45}, {-0.40, 0.00, 0.33, 0.25, 0.10, 0.35, 0.80},
      {0.42, 0.02, 0.28, 0.24, -0.05, 0.33, 0.75}, {-0.08, 0.00, 0.06, 0.28, 0.00, 0.55, 0.60},
      {0.10, 0.00, 0.05, 0.26, 0.00, 0.50, 0.55}, {0.00, 0.25, 0.12, 0.07, 0.00, 0.95, 0.65},
      {-0.20, 0.55, 0.14, 0.08, 0.30, 0.30, 0.70}, {0.00, -0.10, 0.25, 0.04, 0.60, 0.08, 0.12},
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> shift(-0.03, 0.03);
  std::uniform_real_distribution<double> scale(0.92, 1.08);
  std::uniform_real_distribution<double> level(-0.05, 0.05);
  bool first = true;
  for (const Tissue& t : layout) {
    Ellipse e{t.cy, t.cx, t.ay, t.ax, t.angle, {}};
    double t2 = t.t2, pd = t.pd;
    if (!first) {
      e.cy += shift(rng);
      e.cx += shift(rng);
      e.ay *= scale(rng);
      e.ax *= scale(rng);
      t2 = std::clamp(t2 + level(rng), 0.05, 1.0);
      pd = std::clamp(pd + level(rng), 0.05, 1.0);
    }
    first = false;
    e.intensity = {t2, t2, pd, pd};
    spec.ellipses.push_back(e);
  }
  return spec;
}

std::vector<Tensor> gen_phantom(const PhantomSpec& spec, std::size_t slice_index) {
  spec.validate();
  const std::vector<double> phases = motion_phases(spec);
  const double s = static_cast<double>(slice_index);
  std::vector<Ellipse> moved = spec.ellipses;
  // The first ellipse is the body outline and stays put.
  for (std::size_t k = 1; k < moved.size(); ++k) {
    moved[k].cy += 0.03 * std::sin(0.5 * s + phases[k]);
    moved[k].cx += 0.03 * std::cos(0.37 * s + phases[k]);
    const double breathe = 1.0 + 0.05 * std::sin(0.45 * s + 2.0 * phases[k]);
    moved[k].ay *= breathe;
    moved[k].ax *= breathe;
  }

  std::vector<Tensor> out;
  for (std::size_t m = 0; m < spec.count(); ++m) {
    const bool swap = spec.contrasts[m].swap_axes;
    std::vector<double> img(spec.height * spec.width, 0.0);
    for (std::size_t i = 0; i < spec.height; ++i) {
      for (std::size_t j = 0; j < spec.width; ++j) {
        double y = coord(i, spec.height), x = coord(j, spec.width);
        if (swap) std::swap(y, x);
        for (const Ellipse& e : moved) {
          if (inside(e, y, x)) img[i * spec.width + j] = e.intensity[m];
        }
      }
    }
    out.emplace_back(Shape{spec.height, spec.width}, std::move(img));
  }
  return out;
}

Tensor gen_sensitivities(std::size_t coils, std::size_t height, std::size_t width,
                         std::uint64_t seed) {
  if (coils == 0) throw ParameterError("need at least one coil");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double pi = std::numbers::pi;
  const double offset = 2.0 * pi * unit(rng);

  std::vector<double> v(coils * height * width * 2);
  for (std::size_t c = 0; c < coils; ++c) {
    const double theta = offset + 2.0 * pi * static_cast<double>(c) / static_cast<double>(coils);
    const double py = 1.3 * std::sin(theta), px = 1.3 * std::cos(theta);
    const double phase0 = 2.0 * pi * unit(rng);
    const double ramp = pi * (unit(rng) - 0.5);
    const double dir = 2.0 * pi * unit(rng);
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double y = coord(i, height), x = coord(j, width);
        const double d2 = (y - py) * (y - py) + (x - px) * (x - px);
        const double mag = std::exp(-d2 / (2.0 * 0.9 * 0.9));
        const double phase = phase0 + ramp * (y * std::sin(dir) + x * std::cos(dir));
        const std::size_t k = 2 * ((c * height + i) * width + j);
        v[k] = mag * std::cos(phase);
        v[k + 1] = mag * std::sin(phase);
      }
    }
  }
  for (std::size_t p = 0; p < height * width; ++p) {
    double ss = 0.0;
    for (std::size_t c = 0; c < coils; ++c) {
      const std::size_t k = 2 * (c * height * width + p);
      ss += v[k] * v[k] + v[k + 1] * v[k + 1];
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t c = 0; c < coils; ++c) {
      const std::size_t k = 2 * (c * height * width + p);
      v[k] *= inv;
      v[k + 1] *= inv;
    }
  }
  return Tensor({coils, height, width, 2}, std::move(v));
}

Acquisition simulate_acquisition(const Tensor& image, const Tensor& sensitivities,
                                 const SamplingMask& mask, double noise_sigma,
                                 std::uint64_t seed) {
  if (image.rank() != 2 || sensitivities.rank() != 4 || sensitivities.dim(3) != 2 ||
      sensitivities.dim(1) != image.dim(0) || sensitivities.dim(2) != image.dim(1)) {
    throw ShapeError("simulate_acquisition: image " + shape_str(image.shape()) +
                     " does not match sensitivities " + shape_str(sensitivities.shape()));
  }
  if (!(noise_sigma >= 0.0)) throw ParameterError("noise sigma must be nonnegative");
  const std::size_t c = sensitivities.dim(0), n = image.numel();
  std::vector<double> coils(sensitivities.numel());
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t k = 2 * (j * n + p);
      coils[k] = image[p] * sensitivities[k];
      coils[k + 1] = image[p] * sensitivities[k + 1];
    }
  }
  Acquisition out;
  out.coils = Tensor(sensitivities.shape(), std::move(coils));
  check_coil_stack(out.coils, mask);

  const Tensor k = fft2c(out.coils);
  std::vector<double> f(k.data().begin(), k.data().end());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma / std::numbers::sqrt2);
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    const double sample = noise_sigma > 0.0 ? noise(rng) : 0.0;
    f[idx] = mask.matrix[(idx / 2) % n] * (f[idx] + sample);
  }
  out.kspace = Tensor(k.shape(), std::move(f));
  return out;
}

void write_dataset(const TaskDataset& ds, const std::filesystem::path& path) {
  if (ds.slices.empty()) throw ParameterError("write_dataset: dataset has no slices");
  using detail::BinaryWriter;
  BinaryWriter w;
  w.magic("MRDS");
  w.u32(kDatasetVersion);
  w.str(ds.name);
  w.u32(BinaryWriter::checked_u32(ds.slices.size()));
  w.u32(BinaryWriter::checked_u32(ds.coils()));
  w.u32(BinaryWriter::checked_u32(ds.height()));
  w.u32(BinaryWriter::checked_u32(ds.width()));
  w.f64(ds.ar);
  w.f64(ds.noise_sigma);
  const Shape stack{ds.coils(), ds.height(), ds.width(), 2};
  const Shape image{ds.height(), ds.width()};
  for (const Slice& s : ds.slices) {
    if (s.coils.shape() != stack || s.kspace.shape() != stack || s.target.shape() != image ||
        s.mask.matrix.shape() != image) {
      throw ShapeError("write_dataset: slices must share one shape");
    }
    w.f64s(s.coils.data());
    w.f64s(s.kspace.data());
    w.f64s(s.mask.matrix.data());
    w.f64s(s.target.data());
  }
  w.save(path);
}

TaskDataset read_dataset(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("MRDS");
  r.expect_version(kDatasetVersion);
  TaskDataset ds;
  ds.name = r.str();
  const std::size_t slices = r.u32(), c = r.u32(), h = r.u32(), w = r.u32();
  ds.ar = r.f64();
  ds.noise_sigma = r.f64();
  const Shape stack{c, h, w, 2};
  const Shape image{h, w};
  for (std::size_t k = 0; k < slices; ++k) {
    Slice s;
    s.coils = Tensor(stack, r.f64s(shape_numel(stack)));
    s.kspace = Tensor(stack, r.f64s(shape_numel(stack)));
    s.mask.matrix = Tensor(image, r.f64s(h * w));
    s.mask.ar = ds.ar;
    s.target = Tensor(image, r.f64s(h * w));
    ds.slices.push_back(std::move(s));
  }
  return ds;
}

std::vector<TaskSplit> synthesize(const SynthConfig& cfg) {
  if (cfg.train_slices == 0 || cfg.test_slices == 0) {
    throw ParameterError("synthesize: need at least one training and one test slice");
  }
  const PhantomSpec spec = PhantomSpec::standard(cfg.height, cfg.width, cfg.seed);
  const std::size_t acs = cfg.acs_lines ? cfg.acs_lines : default_acs_lines(cfg.height);
  const std::size_t total = cfg.train_slices + cfg.test_slices;

  std::vector<std::vector<Tensor>> phantoms;
  for (std::size_t s = 0; s < total; ++s) phantoms.push_back(gen_phantom(spec, s));
  const Tensor sens = gen_sensitivities(cfg.coils, cfg.height, cfg.width, cfg.seed + 1);

  std::vector<TaskSplit> out;
  for (std::size_t task = 0; task < spec.count(); ++task) {
    const std::uint64_t task_seed = cfg.seed * 1000003ULL + 7919ULL * (task + 1);
    const SamplingMask mask = make_mask(cfg.height, cfg.width, cfg.ar, acs, task_seed);
    TaskSplit split;
    for (TaskDataset* ds : {&split.train, &split.test}) {
      ds->name = spec.contrasts[task].name;
      ds->ar = cfg.ar;
      ds->noise_sigma = cfg.noise_sigma;
      ds->seed = task_seed;
    }
    for (std::size_t s = 0; s < total; ++s) {
      const Acquisition acq = simulate_acquisition(phantoms[s][task], sens, mask,
                                                   cfg.noise_sigma, task_seed + 31 * (s + 1));
      Slice slice{acq.coils, acq.kspace, mask, rss(acq.coils)};
      (s < cfg.train_slices ? split.train : split.test).slices.push_back(std::move(slice));
    }
    out.push_back(std::move(split));
  }
  return out;
}

}  // namespace metarecon
