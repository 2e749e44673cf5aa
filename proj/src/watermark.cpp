// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/png_io.hpp>
#include <dovforge/watermark.hpp>

#include <json.hpp>

#include <array>
#include <fstream>

namespace dovforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::pair<WatermarkKind, std::string_view>, 5> kKindNames{{
    {WatermarkKind::badnets_cross, "badnets_cross"},
    {WatermarkKind::badnets_line, "badnets_line"},
    {WatermarkKind::blended, "blended"},
    {WatermarkKind::forged, "forged"},
    {WatermarkKind::custom, "custom"},
}};

bool channel_uniform(const ImageTensor &m) {
  const Shape s = m.shape();
  for (int c = 1; c < s.channels; ++c)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        if (m.at(c, y, x) != m.at(0, y, x))
          return false;
  return true;
}

} // namespace

std::string to_string(WatermarkKind kind) {
  for (const auto &[k, name] : kKindNames)
    if (k == kind)
      return std::string(name);
  return "custom";
}

WatermarkKind watermark_kind_from_string(std::string_view s) {
  for (const auto &[k, name] : kKindNames)
    if (name == s)
      return k;
  throw ConfigError("unknown watermark kind '" + std::string(s) + "'");
}

Watermark::Watermark(ImageTensor pattern, ImageTensor blend_map,
                     int target_label, WatermarkKind kind)
    : pattern_(std::move(pattern)), blend_(std::move(blend_map)),
      target_label_(target_label), kind_(kind) {
  require_same_shape(blend_.shape(), pattern_.shape(), "watermark blend map");
  if (target_label_ < 0)
    throw ConfigError("negative target label");
}

void save_watermark(const Watermark &wm, const fs::path &dir) {
  fs::create_directories(dir);
  write_png(wm.pattern(), dir / "pattern.png");

  const Shape s = wm.shape();
  if (channel_uniform(wm.blend_map())) {
    Tensor gray(Shape{1, s.height, s.width});
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        gray.at(0, y, x) = wm.blend_map().at(0, y, x);
    write_png(ImageTensor(std::move(gray)), dir / "blend.png");
  } else {
    write_png(wm.blend_map(), dir / "blend.png");
  }

  json meta = {{"target_label", wm.target_label()},
               {"kind", to_string(wm.kind())}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

Watermark load_watermark(const fs::path &dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in)
    throw IoError("missing " + (dir / "meta.json").string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception &e) {
    throw IoError("bad watermark meta.json: " + std::string(e.what()));
  }

  ImageTensor pattern = read_png(dir / "pattern.png");
  ImageTensor blend = read_png(dir / "blend.png");
  const Shape s = pattern.shape();
  if (blend.shape().channels == 1 && s.channels != 1) {
    Tensor wide(s);
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
          wide.at(c, y, x) = blend.at(0, y, x);
    blend = ImageTensor(std::move(wide));
  }
  return Watermark(std::move(pattern), std::move(blend),
                   meta.at("target_label").get<int>(),
                   watermark_kind_from_string(
                       meta.value("kind", std::string("custom"))));
}

} // namespace dovforge
