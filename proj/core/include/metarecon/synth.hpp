#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metarecon/physics.hpp"
#include "metarecon/tensor.hpp"

namespace metarecon {

/// One tissue, in normalized coordinates where the field of view spans
/// [-1, 1] on both axes. `intensity` holds one value per contrast.
struct Ellipse {
  double cy = 0.0, cx = 0.0;
  double ay = 0.5, ax = 0.5;
  double angle = 0.0;  // radians, counter-clockwise
  std::vector<double> intensity;
};

struct Contrast {
  std::string name;
  /// Coronal contrasts see the same tissues with the two axes swapped.
  bool swap_axes = false;
};

struct PhantomSpec {
  std::size_t height = 48;
  std::size_t width = 48;
  std::vector<Contrast> contrasts;
  /// Painted in order; later ellipses cover earlier ones.
  std::vector<Ellipse> ellipses;
  std::uint64_t seed = 0;

  std::size_t count() const { return contrasts.size(); }
  void validate() const;

  /// Four contrasts (Sag-T2, Cor-T2, Sag-PD, Cor-PD) over a knee-like layout
  /// jittered by `seed`. The outer ellipse is a centered disc that every
  /// inner tissue stays inside, so all contrasts share one support.
  static PhantomSpec standard(std::size_t height, std::size_t width, std::uint64_t seed);
};

/// One real (H, W) image per contrast. The slice index moves the inner
/// tissues smoothly, like neighbouring slices of a volume.
std::vector<Tensor> gen_phantom(const PhantomSpec& spec, std::size_t slice_index);

/// (c, H, W, 2) smooth complex maps with sum_j |s_j|^2 = 1 at every pixel.
Tensor gen_sensitivities(std::size_t coils, std::size_t height, std::size_t width,
                         std::uint64_t seed);

struct Acquisition {
  Tensor coils;   // phantom * s_j
  Tensor kspace;  // mask * (F coils + n)
};

/// Noise is circular complex Gaussian with E|n|^2 = noise_sigma^2.
Acquisition simulate_acquisition(const Tensor& image, const Tensor& sensitivities,
                                 const SamplingMask& mask, double noise_sigma,
                                 std::uint64_t seed);

struct Slice {
  Tensor coils;   // fully sampled, noiseless (c, H, W, 2)
  Tensor kspace;  // (c, H, W, 2)
  SamplingMask mask;
  Tensor target;  // x* = rss(coils), (H, W)
};

struct TaskDataset {
  std::string name;
  double ar = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;  // not persisted
  std::vector<Slice> slices;

  std::size_t coils() const { return slices.front().coils.dim(0); }
  std::size_t height() const { return slices.front().target.dim(0); }
  std::size_t width() const { return slices.front().target.dim(1); }
};

inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(const TaskDataset& ds, const std::filesystem::path& path);
TaskDataset read_dataset(const std::filesystem::path& path);

struct SynthConfig {
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t coils = 4;
  std::size_t train_slices = 8;
  std::size_t test_slices = 2;
  double ar = 4.0;
  std::size_t acs_lines = 0;  // 0 selects default_acs_lines(height)
  double noise_sigma = 0.005;
  std::uint64_t seed = 0;
};

struct TaskSplit {
  TaskDataset train;
  TaskDataset test;
};

/// Full pipeline for every standard contrast. Each task has its own mask
/// (shared by its coils and slices) and noise streams; test slices continue
/// the slice index after the training ones.
std::vector<TaskSplit> synthesize(const SynthConfig& cfg);

}  // namespace metarecon
