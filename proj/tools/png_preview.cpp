#include "png_preview.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "metarecon/errors.hpp"

namespace metarecon::cli {

void write_png(const Tensor& image, double white, const std::filesystem::path& path) {
  if (image.rank() != 2) throw ShapeError("write_png: expected an (H, W) image");
  const std::size_t h = image.dim(0);
  const std::size_t w = image.dim(1);
  const double scale = white > 0.0 ? 255.0 / white : 0.0;
  std::vector<png_byte> pixels(h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    pixels[p] = static_cast<png_byte>(std::clamp(std::round(image[p] * scale), 0.0, 255.0));
  }

  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, pixels.data() + y * w);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace metarecon::cli
