// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/synthetic.hpp>

#include <algorithm>
#include <array>
#include <cmath>

namespace dovforge {

namespace {

// Shape membership in normalized coordinates: (u, v) in [-1, 1]^2 relative to
// the shape center and half-extent.
bool inside(int shape, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape) {
  case 0: // disc
    return u * u + v * v <= 1.0;
  case 1: // square
    return au <= 0.85 && av <= 0.85;
  case 2: // triangle, apex up
    return v <= 0.9 && v >= -0.9 && au <= (v + 0.9) / 1.8;
  case 3: { // ring
    const double r2 = u * u + v * v;
    return r2 <= 1.0 && r2 >= 0.36;
  }
  case 4: // square frame
    return au <= 0.9 && av <= 0.9 && (au >= 0.55 || av >= 0.55);
  case 5: // two horizontal bars
    return au <= 0.95 && ((v >= -0.8 && v <= -0.35) || (v >= 0.35 && v <= 0.8));
  case 6: // two vertical bars
    return av <= 0.95 && ((u >= -0.8 && u <= -0.35) || (u >= 0.35 && u <= 0.8));
  case 7: // diamond
    return au + av <= 1.0;
  case 8: // diagonal X
    return au <= 0.95 && av <= 0.95 &&
           (std::abs(u - v) <= 0.3 || std::abs(u + v) <= 0.3);
  default: // 2x2 checker
    return au <= 0.9 && av <= 0.9 && ((u < 0) == (v < 0));
  }
}

double luminance(const std::array<double, 3> &c) {
  return (c[0] + c[1] + c[2]) / 3.0;
}

} // namespace

LabeledDataset make_synthetic_dataset(const SyntheticConfig &cfg) {
  if (cfg.num_classes < 2 || cfg.num_classes > 10)
    throw ConfigError("synthetic dataset supports 2..10 classes");
  if (cfg.channels != 1 && cfg.channels != 3)
    throw ConfigError("synthetic dataset supports 1 or 3 channels");
  if (cfg.height < 8 || cfg.width < 8)
    throw ConfigError("synthetic images must be at least 8x8");

  Rng rng(cfg.seed);
  const auto order = rng.permutation(cfg.count);
  const Shape shape{cfg.channels, cfg.height, cfg.width};
  const double side = std::min(cfg.height, cfg.width);

  std::vector<Sample> items(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const int label = static_cast<int>(order[i] % cfg.num_classes);

    std::array<double, 3> bg{}, fg{};
    for (auto &v : bg)
      v = rng.uniform(0.1, 0.9);
    do {
      for (auto &v : fg)
        v = rng.uniform(0.0, 1.0);
    } while (std::abs(luminance(fg) - luminance(bg)) < 0.25);

    const double half = side * rng.uniform(0.2, 0.32);
    const double cy = cfg.height / 2.0 + rng.uniform(-0.12, 0.12) * side;
    const double cx = cfg.width / 2.0 + rng.uniform(-0.12, 0.12) * side;
    const double grad_y = rng.uniform(-0.1, 0.1);
    const double grad_x = rng.uniform(-0.1, 0.1);

    Tensor t(shape);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        // 2x2 supersampling for soft edges.
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) {
            const double py = y + 0.25 + 0.5 * sy;
            const double px = x + 0.25 + 0.5 * sx;
            hits += inside(label, (px - cx) / half, (py - cy) / half);
          }
        const double cover = hits / 4.0;
        const double shade = grad_y * (y / side - 0.5) + grad_x * (x / side - 0.5);
        for (int c = 0; c < cfg.channels; ++c) {
          const double b = cfg.channels == 1 ? luminance(bg) : bg[c];
          const double f = cfg.channels == 1 ? luminance(fg) : fg[c];
          const double v = cover * f + (1.0 - cover) * (b + shade) +
                           cfg.noise * rng.normal();
          t.at(c, y, x) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        }
      }
    items[i] = {ImageTensor(std::move(t)), label};
  }
  return LabeledDataset(std::move(items), cfg.num_classes, cfg.name);
}

} // namespace dovforge
