// SPDX-License-Identifier: Apache-2.0
/**
 * @file   png_io.hpp
 * @brief  8-bit PNG read/write for ImageTensor (gray, RGB, RGBA).
 */
#ifndef DOVFORGE_PNG_IO_HPP
#define DOVFORGE_PNG_IO_HPP

#include <dovforge/tensor.hpp>

#include <filesystem>

namespace dovforge {

/// Values are rounded to the nearest k/255.
void write_png(const ImageTensor &img, const std::filesystem::path &file);
/// Pixel values are rescaled by 1/255.
ImageTensor read_png(const std::filesystem::path &file);

} // namespace dovforge

#endif // DOVFORGE_PNG_IO_HPP
