// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/watermarking.hpp>

#include <algorithm>
#include <cmath>

namespace dovforge {

namespace {

constexpr int kCrossSize = 5;
constexpr int kCrossInset = 1;
constexpr int kLineRows = 3;

} // namespace

Watermark make_badnets_watermark(const Shape &shape, BadnetsVariant variant,
                                 double intensity, int target_label) {
  if (!(intensity >= 0.0 && intensity <= 1.0))
    throw ConfigError("trigger intensity must be in [0,1]");
  if (shape.size() == 0)
    throw ShapeError("empty image shape");

  Tensor mask(Shape{1, shape.height, shape.width}, 0.0);
  WatermarkKind kind;
  if (variant == BadnetsVariant::cross) {
    const int extent = kCrossSize + kCrossInset;
    if (shape.height < extent || shape.width < extent)
      throw ShapeError("cross trigger needs at least " +
                       std::to_string(extent) + "x" + std::to_string(extent) +
                       " pixels, image is " + shape.str());
    const int top = shape.height - extent;
    const int left = shape.width - extent;
    const int mid = kCrossSize / 2;
    for (int i = 0; i < kCrossSize; ++i) {
      mask.at(0, top + i, left + mid) = 1.0;
      mask.at(0, top + mid, left + i) = 1.0;
    }
    kind = WatermarkKind::badnets_cross;
  } else {
    if (shape.height < kLineRows)
      throw ShapeError("line trigger needs at least " +
                       std::to_string(kLineRows) + " rows");
    for (int y = 0; y < kLineRows; ++y)
      for (int x = 0; x < shape.width; ++x)
        mask.at(0, y, x) = 1.0;
    kind = WatermarkKind::badnets_line;
  }

  Tensor pattern(shape, 0.0), blend(shape, 1.0);
  for (int c = 0; c < shape.channels; ++c)
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        if (mask.at(0, y, x) != 0.0) {
          pattern.at(c, y, x) = intensity;
          blend.at(c, y, x) = 0.0;
        }
  return Watermark(ImageTensor(std::move(pattern)), ImageTensor(std::move(blend)),
                   target_label, kind);
}

Watermark make_blended_watermark(const ImageTensor &pattern_image,
                                 double transparency, int target_label) {
  if (!(transparency >= 0.0 && transparency <= 0.2))
    throw ConfigError("blended transparency must be in [0, 0.2], got " +
                      std::to_string(transparency));
  Tensor blend(pattern_image.shape(), 1.0);
  for (std::size_t i = 0; i < blend.size(); ++i)
    if (pattern_image[i] != 0.0)
      blend[i] = 1.0 - transparency;
  return Watermark(pattern_image, ImageTensor(std::move(blend)), target_label,
                   WatermarkKind::blended);
}

ImageTensor embed(const ImageTensor &image, const Watermark &wm) {
  require_same_shape(image.shape(), wm.shape(), "embed");
  Tensor out(image.shape());
  const auto &rho = wm.blend_map();
  const auto &t = wm.pattern();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(rho[i] * image[i] + (1.0 - rho[i]) * t[i], 0.0, 1.0);
  return ImageTensor(std::move(out));
}

LabeledDataset embed_all(const LabeledDataset &ds, const Watermark &wm) {
  std::vector<Sample> items;
  items.reserve(ds.size());
  for (const auto &s : ds.items())
    items.push_back({embed(s.image, wm), s.label});
  return LabeledDataset(std::move(items), ds.num_classes(), ds.name() + "+wm");
}

PoisonResult poison_dataset(const LabeledDataset &ds, const Watermark &wm,
                            const PoisonConfig &cfg) {
  if (ds.empty())
    throw EmptyInputError("poison_dataset: empty dataset");
  if (!(cfg.rate > 0.0 && cfg.rate <= 1.0))
    throw ConfigError("poison rate must be in (0,1]");
  if (cfg.target_label < 0 || cfg.target_label >= ds.num_classes())
    throw ConfigError("target label " + std::to_string(cfg.target_label) +
                      " outside [0," + std::to_string(ds.num_classes()) + ")");
  if (cfg.target_label != wm.target_label())
    throw ConfigError("poison target label " + std::to_string(cfg.target_label) +
                      " differs from watermark target " +
                      std::to_string(wm.target_label()));
  require_same_shape(wm.shape(), ds.image_shape(), "poison_dataset watermark");

  const auto k = static_cast<std::size_t>(
      std::floor(cfg.rate * static_cast<double>(ds.size())));
  if (k == 0)
    throw ConfigError("floor(rate * N) is 0: nothing to poison");

  Rng rng(cfg.seed);
  PoisonResult out;
  out.poisoned_indices = rng.sample_without_replacement(ds.size(), k);

  std::vector<Sample> items = ds.items();
  for (std::size_t i : out.poisoned_indices) {
    items[i].image = embed(items[i].image, wm);
    if (cfg.relabel)
      items[i].label = cfg.target_label;
  }
  out.dataset =
      LabeledDataset(std::move(items), ds.num_classes(), ds.name() + "+poisoned");
  return out;
}

} // namespace dovforge
