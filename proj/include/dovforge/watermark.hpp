// SPDX-License-Identifier: Apache-2.0
/**
 * @file   watermark.hpp
 * @brief  Trigger pattern + per-pixel blend map + target label.
 *
 * The blend map holds the weight kept from the host image: 1 leaves the
 * pixel untouched, 0 replaces it by the pattern.
 */
#ifndef DOVFORGE_WATERMARK_HPP
#define DOVFORGE_WATERMARK_HPP

#include <dovforge/tensor.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace dovforge {

enum class WatermarkKind { badnets_cross, badnets_line, blended, forged, custom };

std::string to_string(WatermarkKind kind);
WatermarkKind watermark_kind_from_string(std::string_view s);

class Watermark {
public:
  Watermark() = default;
  /// Throws ShapeError when pattern and blend_map differ in shape.
  Watermark(ImageTensor pattern, ImageTensor blend_map, int target_label,
            WatermarkKind kind);

  const ImageTensor &pattern() const noexcept { return pattern_; }
  const ImageTensor &blend_map() const noexcept { return blend_; }
  int target_label() const noexcept { return target_label_; }
  WatermarkKind kind() const noexcept { return kind_; }
  const Shape &shape() const noexcept { return pattern_.shape(); }

  friend bool operator==(const Watermark &, const Watermark &) = default;

private:
  ImageTensor pattern_;
  ImageTensor blend_;
  int target_label_ = 0;
  WatermarkKind kind_ = WatermarkKind::custom;
};

/// pattern.png, blend.png (8-bit gray when the map is channel-uniform,
/// otherwise one channel per image channel), meta.json.
void save_watermark(const Watermark &wm, const std::filesystem::path &dir);
Watermark load_watermark(const std::filesystem::path &dir);

} // namespace dovforge

#endif // DOVFORGE_WATERMARK_HPP
