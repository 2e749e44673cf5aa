// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <dovforge/watermark.hpp>
#include <dovforge/watermarking.hpp>

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace dovforge;
using namespace testing;

namespace {

int support_pixels(const Watermark &wm, int channel) {
  int n = 0;
  const Shape &s = wm.shape();
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      n += wm.blend_map().at(channel, y, x) < 1.0;
  return n;
}

} // namespace

TEST_SUITE("watermarking") {

TEST_CASE("badnets geometry") {
  const Shape s{3, 32, 32};
  const auto cross = make_badnets_watermark(s, BadnetsVariant::cross, 1.0, 0);
  const auto line = make_badnets_watermark(s, BadnetsVariant::line, 1.0, 0);
  for (int c = 0; c < 3; ++c) {
    CHECK(support_pixels(cross, c) == 9);
    CHECK(support_pixels(line, c) == 96);
  }
  // Cross centre sits 3 pixels in from the lower-right corner.
  CHECK(cross.blend_map().at(0, 28, 28) == 0.0);
  CHECK(cross.blend_map().at(0, 30, 28) == 0.0);
  CHECK(cross.blend_map().at(0, 28, 30) == 0.0);
  CHECK(cross.blend_map().at(0, 31, 28) == 1.0);
  CHECK(line.blend_map().at(2, 2, 17) == 0.0);
  CHECK(line.blend_map().at(2, 3, 17) == 1.0);

  for (const auto *wm : {&cross, &line}) {
    for (double v : wm->blend_map().values())
      CHECK((v == 0.0 || v == 1.0));
    for (std::size_t i = 0; i < wm->pattern().size(); ++i)
      CHECK(wm->pattern()[i] == (wm->blend_map()[i] == 0.0 ? 1.0 : 0.0));
  }

  CHECK_THROWS_AS(make_badnets_watermark(Shape{1, 3, 3}, BadnetsVariant::cross, 1.0, 0),
                  ShapeError);
  CHECK_THROWS_AS(make_badnets_watermark(Shape{1, 2, 8}, BadnetsVariant::line, 1.0, 0),
                  ShapeError);
}

TEST_CASE("blended blend map follows the pattern support") {
  const Shape s{1, 4, 4};
  std::vector<double> v(s.size(), 0.0);
  v[0] = 0.7;
  v[5] = 1.0;
  const ImageTensor pattern(s, v);
  const auto wm = make_blended_watermark(pattern, 0.2, 3);
  CHECK(wm.blend_map()[0] == doctest::Approx(0.8));
  CHECK(wm.blend_map()[5] == doctest::Approx(0.8));
  CHECK(wm.blend_map()[1] == 1.0);
  CHECK(wm.target_label() == 3);
  CHECK(wm.kind() == WatermarkKind::blended);

  const auto invisible = make_blended_watermark(pattern, 0.0, 0);
  for (double b : invisible.blend_map().values())
    CHECK(b == 1.0);

  CHECK_THROWS_AS(make_blended_watermark(pattern, 0.25, 0), ConfigError);
  CHECK_THROWS_AS(make_blended_watermark(pattern, -0.1, 0), ConfigError);
}

TEST_CASE("embed arithmetic") {
  const Shape s{1, 2, 2};
  const auto x = constant_image(s, 0.5);

  const Watermark keep(constant_image(s, 1.0), constant_image(s, 1.0), 0, WatermarkKind::custom);
  CHECK(embed(x, keep) == x);

  const Watermark replace(constant_image(s, 0.9), constant_image(s, 0.0), 0,
                          WatermarkKind::custom);
  CHECK(embed(x, replace) == constant_image(s, 0.9));

  const Watermark mix(constant_image(s, 1.0), constant_image(s, 0.8), 0, WatermarkKind::custom);
  const auto mixed = embed(x, mix);
  for (double v : mixed.values())
    CHECK(v == doctest::Approx(0.6).epsilon(1e-12));

  const auto zero = make_blended_watermark(constant_image(s, 0.0), 0.2, 0);
  CHECK(embed(x, zero) == x);

  CHECK_THROWS_AS(embed(constant_image(Shape{1, 3, 2}, 0.5), mix), ShapeError);
}

TEST_CASE("embed stays in range and is idempotent for badnets") {
  const Shape s{3, 16, 16};
  Rng rng(RngSeed{8});
  const auto cross = make_badnets_watermark(s, BadnetsVariant::cross, 0.8, 1);
  const auto blended = make_blended_watermark(random_image(s, rng), 0.2, 1);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_image(s, rng);
    const auto once = embed(x, cross);
    CHECK(embed(once, cross) == once);
    const auto y = embed(x, blended);
    for (double v : y.values())
      CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("poison_dataset selects floor(rate * N) samples") {
  const Shape s{1, 8, 8};
  const auto ds = random_dataset(5000, s, 10, RngSeed{1});
  const auto wm = make_badnets_watermark(s, BadnetsVariant::cross, 1.0, 0);
  const auto res = poison_dataset(ds, wm, PoisonConfig{.rate = 0.1, .target_label = 0,
                                                       .relabel = true, .seed = RngSeed{5}});
  REQUIRE(res.poisoned_indices.size() == 500);
  CHECK(std::is_sorted(res.poisoned_indices.begin(), res.poisoned_indices.end()));

  std::vector<char> is_poisoned(ds.size(), 0);
  for (std::size_t i : res.poisoned_indices)
    is_poisoned[i] = 1;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (is_poisoned[i]) {
      CHECK(res.dataset[i].label == 0);
      CHECK(res.dataset[i].image == embed(ds[i].image, wm));
    } else {
      CHECK(res.dataset[i] == ds[i]);
    }
  }

  const auto again = poison_dataset(ds, wm, PoisonConfig{.rate = 0.1, .seed = RngSeed{5}});
  CHECK(again.poisoned_indices == res.poisoned_indices);
}

TEST_CASE("poison_dataset edge rates") {
  const Shape s{1, 8, 8};
  const auto ds = random_dataset(40, s, 4, RngSeed{2});
  const auto wm = make_badnets_watermark(s, BadnetsVariant::line, 1.0, 2);

  const auto all = poison_dataset(ds, wm, PoisonConfig{.rate = 1.0, .target_label = 2});
  CHECK(all.poisoned_indices.size() == ds.size());

  const auto clean_label =
      poison_dataset(ds, wm, PoisonConfig{.rate = 0.5, .target_label = 2, .relabel = false});
  std::map<int, int> before, after;
  for (const auto &x : ds.items())
    ++before[x.label];
  for (const auto &x : clean_label.dataset.items())
    ++after[x.label];
  CHECK(before == after);

  CHECK_THROWS_AS(poison_dataset(ds, wm, PoisonConfig{.rate = 0.01, .target_label = 2}),
                  ConfigError);
  CHECK_THROWS_AS(poison_dataset(ds, wm, PoisonConfig{.rate = 0.1, .target_label = 4}),
                  ConfigError);
}

TEST_CASE("an invisible watermark only relabels") {
  const Shape s{1, 6, 6};
  const auto ds = random_dataset(50, s, 5, RngSeed{3});
  const Watermark none(constant_image(s, 1.0), constant_image(s, 1.0), 1, WatermarkKind::custom);
  const auto res = poison_dataset(ds, none, PoisonConfig{.rate = 0.4, .target_label = 1});
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(res.dataset[i].image == ds[i].image);
  for (std::size_t i : res.poisoned_indices)
    CHECK(res.dataset[i].label == 1);
}

TEST_CASE("watermark save and load round trip") {
  const auto dir = scratch_dir("wm-io");
  const auto wm = make_badnets_watermark(Shape{3, 16, 16}, BadnetsVariant::cross, 1.0, 4);
  save_watermark(wm, dir / "wm");
  CHECK(load_watermark(dir / "wm") == wm);
  CHECK(watermark_kind_from_string(to_string(WatermarkKind::blended)) == WatermarkKind::blended);
}

} // TEST_SUITE
