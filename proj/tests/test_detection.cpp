// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <dovforge/detection.hpp>
#include <dovforge/synthetic.hpp>
#include <dovforge/watermarking.hpp>

#include <doctest.h>

#include <cmath>

using namespace dovforge;
using namespace testing;

namespace {

double sum_sq(std::span<const double> v) {
  double s = 0;
  for (double x : v)
    s += x * x;
  return s;
}

// Naive O(N^4) orthonormal DCT-II used as an oracle.
Tensor naive_dct(const Tensor &x) {
  const Shape &s = x.shape();
  Tensor out(s);
  const auto alpha = [](int k, int n) { return std::sqrt((k == 0 ? 1.0 : 2.0) / n); };
  for (int c = 0; c < s.channels; ++c)
    for (int u = 0; u < s.height; ++u)
      for (int v = 0; v < s.width; ++v) {
        double acc = 0;
        for (int y = 0; y < s.height; ++y)
          for (int z = 0; z < s.width; ++z)
            acc += x.at(c, y, z) * std::cos(M_PI * (2 * y + 1) * u / (2.0 * s.height)) *
                   std::cos(M_PI * (2 * z + 1) * v / (2.0 * s.width));
        out.at(c, u, v) = alpha(u, s.height) * alpha(v, s.width) * acc;
      }
  return out;
}

struct TrainedDetector {
  LabeledDataset clean;
  FrequencyDetector det;
};

const TrainedDetector &shared_detector() {
  static const TrainedDetector td = [] {
    // Desk-scale training; smaller sets miss small solid patches.
    SyntheticConfig sc{.count = 2000, .seed = RngSeed{100}};
    TrainedDetector t;
    t.clean = make_synthetic_dataset(sc);
    t.det = train_detector(t.clean, {}, DetectorConfig{.seed = RngSeed{101}});
    return t;
  }();
  return td;
}

ImageTensor with_patch(const ImageTensor &img, int y0, int x0, double value) {
  Tensor t = img.tensor();
  for (int c = 0; c < t.shape().channels; ++c)
    for (int y = y0; y < y0 + 5; ++y)
      for (int x = x0; x < x0 + 5; ++x)
        t.at(c, y, x) = value;
  return ImageTensor(std::move(t));
}

} // namespace

TEST_SUITE("detection") {

TEST_CASE("dct2 closed forms") {
  const Shape s{1, 8, 8};
  const double c = 0.37;
  const auto coeffs = dct2(Tensor(s, c));
  CHECK(coeffs.at(0, 0, 0) == doctest::Approx(8 * c).epsilon(1e-12));
  for (std::size_t i = 1; i < coeffs.size(); ++i)
    CHECK(std::abs(coeffs[i]) < 1e-12);
  const auto zero = dct2(Tensor(s, 0.0));
  for (double v : zero.values())
    CHECK(v == 0.0);
}

TEST_CASE("dct2 matches the naive sum on a non-square image") {
  Rng rng(RngSeed{1});
  const auto img = random_image(Shape{2, 5, 7}, rng).tensor();
  const auto fast = dct2(img);
  const auto slow = naive_dct(img);
  for (std::size_t i = 0; i < fast.size(); ++i)
    CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-10));
}

TEST_CASE("dct2 round trip and Parseval") {
  Rng rng(RngSeed{2});
  const Shape s{3, 32, 32};
  for (int i = 0; i < 100; ++i) {
    const auto img = random_image(s, rng).tensor();
    const auto coeffs = dct2(img);
    const auto back = idct2(coeffs);
    double worst = 0;
    for (std::size_t k = 0; k < img.size(); ++k)
      worst = std::max(worst, std::abs(back[k] - img[k]));
    CHECK(worst < 1e-6);
    CHECK(std::abs(sum_sq(img.values()) - sum_sq(coeffs.values())) < 1e-5);
  }
}

TEST_CASE("dct features stay in the unit interval") {
  Rng rng(RngSeed{3});
  const auto f = dct_features(random_image(Shape{3, 16, 16}, rng));
  for (double v : f.values())
    CHECK((v >= 0.0 && v <= 1.0));
  const auto flat = dct_features(constant_image(Shape{1, 4, 4}, 0.0));
  for (double v : flat.values())
    CHECK(v == 0.0);
  const auto img = random_image(Shape{2, 8, 8}, rng);
  const auto coeffs = dct2(img.tensor());
  const auto feats = dct_features(img);
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    CHECK(feats[i] == doctest::Approx(std::tanh(20 * std::abs(coeffs[i]))).epsilon(1e-12));
}

TEST_CASE("synthetic corruption changes the image and stays in range") {
  Rng rng(RngSeed{4});
  const auto img = constant_image(Shape{3, 32, 32}, 0.4);
  for (int i = 0; i < 50; ++i) {
    const auto out = synthetic_corruption(img, rng);
    CHECK_FALSE(out == img);
    for (double v : out.values())
      CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("bwdr and false flag rate") {
  const std::vector<std::size_t> truth{1, 4, 7, 9};
  CHECK(bwdr(truth, truth) == 1.0);
  CHECK(bwdr({0, 2, 3}, truth) == 0.0);
  CHECK(bwdr({1, 2, 9}, truth) == 0.5);
  CHECK_THROWS_AS(bwdr({1}, {}), EmptyInputError);

  // Adding flags never lowers the rate.
  std::vector<std::size_t> flagged;
  double last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    flagged.push_back(i);
    const double r = bwdr(flagged, truth);
    CHECK(r >= last);
    last = r;
  }
  CHECK(false_flag_rate({0, 1, 2}, truth, 10) == doctest::Approx(2.0 / 6.0));
  CHECK(false_flag_rate(truth, truth, 10) == 0.0);
}

TEST_CASE("recover_target_label needs a strict majority") {
  const Shape s{1, 1, 2};
  const auto model = linear_classifier(s, 2, {1, 0, 0, 1, 0, 0});
  const Watermark identity(constant_image(s, 0.0), constant_image(s, 1.0), 0,
                           WatermarkKind::custom);
  const ImageTensor a(s, {1.0, 0.0}), b(s, {0.0, 1.0});

  const LabeledDataset tie({{a, 0}, {b, 1}, {a, 0}, {b, 1}}, 2, "tie");
  try {
    recover_target_label(model, identity, tie);
    FAIL("expected AmbiguityError");
  } catch (const AmbiguityError &e) {
    CHECK(e.first() == 0);
    CHECK(e.second() == 1);
  }

  const LabeledDataset lean({{a, 0}, {b, 1}, {b, 1}}, 2, "lean");
  CHECK(recover_target_label(model, identity, lean) == 1);

  // The watermark itself drives every probe to class 0.
  const Watermark push(ImageTensor(s, {1.0, 0.0}), constant_image(s, 0.0), 0,
                       WatermarkKind::custom);
  CHECK(recover_target_label(model, push, tie) == 0);
}

TEST_CASE("trained detector separates clean from triggered images") {
  const auto &[clean, det] = shared_detector();
  const Shape s = clean.image_shape();

  const auto clean_scan = scan_dataset(det, clean);
  CHECK(clean_scan.scores.size() == clean.size());
  std::size_t below = 0;
  for (double v : clean_scan.scores) {
    CHECK((v >= 0.0 && v <= 1.0));
    below += v < det.threshold();
  }
  CHECK(static_cast<double>(below) / clean.size() >= 0.9);

  SyntheticConfig held{.count = 200, .seed = RngSeed{200}};
  const auto fresh = make_synthetic_dataset(held);
  Rng rng(RngSeed{201});
  std::size_t patch_hits = 0, blend_hits = 0, clean_hits = 0;
  for (const auto &x : fresh.items()) {
    const int y0 = static_cast<int>(rng.below(s.height - 5));
    const int x0 = static_cast<int>(rng.below(s.width - 5));
    patch_hits += det.flags(with_patch(x.image, y0, x0, rng.uniform() < 0.5 ? 0.0 : 1.0));
    const auto noise = make_blended_watermark(random_image(s, rng), 0.2, 0);
    blend_hits += det.flags(embed(x.image, noise));
    clean_hits += det.flags(x.image);
  }
  const double n = static_cast<double>(fresh.size());
  CHECK(patch_hits / n >= 0.9);
  CHECK(blend_hits / n >= 0.9);
  CHECK(clean_hits / n <= 0.1);

  const auto wm = make_badnets_watermark(s, BadnetsVariant::cross, 1.0, 0);
  const auto all = poison_dataset(fresh, wm, PoisonConfig{.rate = 1.0});
  const auto scan = scan_dataset(det, all.dataset);
  CHECK(static_cast<double>(scan.flagged.size()) / n >= 0.9);
}

TEST_CASE("detector and scan persistence") {
  const auto &[clean, det] = shared_detector();
  const auto dir = scratch_dir("detector-io");
  save_detector(det, dir / "det");
  const auto back = load_detector(dir / "det");
  CHECK(back.threshold() == det.threshold());
  CHECK(back.model() == det.model());

  const auto sub = clean.subset({0, 1, 2, 3, 4, 5, 6, 7}, "sub");
  const auto scan = scan_dataset(det, sub);
  save_scan(scan, dir / "scan.csv");
  const auto loaded = load_scan(dir / "scan.csv");
  CHECK(loaded.flagged == scan.flagged);
  REQUIRE(loaded.scores.size() == scan.scores.size());
  for (std::size_t i = 0; i < scan.scores.size(); ++i)
    CHECK(loaded.scores[i] == doctest::Approx(scan.scores[i]).epsilon(1e-12));
}

TEST_CASE("train_detector rejects an empty clean set") {
  CHECK_THROWS_AS(train_detector(LabeledDataset{}, {}, DetectorConfig{}), EmptyInputError);
}

} // TEST_SUITE
