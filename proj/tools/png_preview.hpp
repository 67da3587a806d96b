#pragma once

#include <filesystem>

#include "metarecon/tensor.hpp"

namespace metarecon::cli {

/// 8-bit grayscale PNG of a real (H, W) image; values are scaled so that
/// `white` maps to 255 and clipped to [0, 255].
void write_png(const Tensor& image, double white, const std::filesystem::path& path);

}  // namespace metarecon::cli
