// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/png_io.hpp>

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace dovforge {

namespace {

struct FileCloser {
  void operator()(std::FILE *f) const {
    if (f)
      std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

int color_type_for(int channels) {
  switch (channels) {
  case 1:
    return PNG_COLOR_TYPE_GRAY;
  case 2:
    return PNG_COLOR_TYPE_GRAY_ALPHA;
  case 3:
    return PNG_COLOR_TYPE_RGB;
  case 4:
    return PNG_COLOR_TYPE_RGB_ALPHA;
  default:
    throw ShapeError("PNG supports 1-4 channels, got " +
                     std::to_string(channels));
  }
}

} // namespace

void write_png(const ImageTensor &img, const std::filesystem::path &file) {
  const Shape s = img.shape();
  const int color_type = color_type_for(s.channels);

  FilePtr fp(std::fopen(file.c_str(), "wb"));
  if (!fp)
    throw IoError("cannot open " + file.string() + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed for " + file.string());
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, s.width, s.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(s.width) * s.channels);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x)
      for (int c = 0; c < s.channels; ++c)
        row[static_cast<std::size_t>(x) * s.channels + c] =
            static_cast<png_byte>(std::lround(img.at(c, y, x) * 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageTensor read_png(const std::filesystem::path &file) {
  FilePtr fp(std::fopen(file.c_str(), "rb"));
  if (!fp)
    throw IoError("cannot open " + file.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read failed for " + file.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize everything to 8-bit, non-palette.
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (bit_depth == 16)
    png_set_strip_16(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);

  std::vector<png_byte> buf(png_get_rowbytes(png, info) *
                            static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = buf.data() + static_cast<std::size_t>(y) *
                               png_get_rowbytes(png, info);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor t(Shape{channels, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        t.at(c, y, x) = rows[y][static_cast<std::size_t>(x) * channels + c] /
                        255.0;
  return ImageTensor(std::move(t));
}

} // namespace dovforge
