// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <dovforge/metrics.hpp>
#include <dovforge/watermarking.hpp>

#include <doctest.h>

using namespace dovforge;
using namespace testing;

TEST_SUITE("metrics") {

TEST_CASE("mse examples") {
  const Shape s{1, 1, 2};
  CHECK(mse(ImageTensor(s, {0.5, 0.5}), ImageTensor(s, {0.1, 0.9})) ==
        doctest::Approx(0.16).epsilon(1e-12));
  CHECK(mse(constant_image(s, 1.0), constant_image(s, 0.0)) == 1.0);
  CHECK(mse(constant_image(s, 0.3), constant_image(s, 0.3)) == 0.0);
  CHECK_THROWS_AS(mse(constant_image(s, 0.3), constant_image(Shape{1, 2, 1}, 0.3)), ShapeError);
}

TEST_CASE("mse is symmetric and non-negative") {
  Rng rng(RngSeed{1});
  const Shape s{3, 8, 8};
  for (int i = 0; i < 20; ++i) {
    const auto a = random_image(s, rng), b = random_image(s, rng);
    CHECK(mse(a, b) == mse(b, a));
    CHECK(mse(a, b) >= 0.0);
    CHECK(mse(a, a) == 0.0);
  }
}

TEST_CASE("psnr examples and monotonicity") {
  const Shape s{1, 10, 10};
  const auto zero = constant_image(s, 0.0);
  CHECK(psnr(zero, zero) == kPsnrCap);
  CHECK(psnr(zero, constant_image(s, 0.1)) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(zero, constant_image(s, 1.0)) == doctest::Approx(0.0));
  double last = kPsnrCap + 1;
  for (int k = 1; k <= 20; ++k) {
    const double p = psnr(zero, constant_image(s, k * 0.05));
    CHECK(p < last);
    last = p;
  }
}

TEST_CASE("ssim of constant images has a closed form") {
  const Shape s{1, 16, 16};
  const double c1 = 1e-4, ma = 0.5, mb = 0.6;
  const double expected = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
  CHECK(ssim(constant_image(s, ma), constant_image(s, mb)) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim identity, symmetry and noise") {
  const Shape s{3, 32, 32};
  Rng rng(RngSeed{2});
  for (int i = 0; i < 10; ++i) {
    const auto a = random_image(s, rng), b = random_image(s, rng);
    CHECK(ssim(a, a) == 1.0);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
    CHECK(std::abs(ssim(a, b)) < 0.2);
  }
}

TEST_CASE("ssim shrinks its window on small images") {
  Rng rng(RngSeed{3});
  const auto a = random_image(Shape{1, 6, 9}, rng), b = random_image(Shape{1, 6, 9}, rng);
  const auto r = ssim_ex(a, b);
  CHECK(r.window == 5);
  CHECK(r.window_shrunk);
  const auto full = ssim_ex(random_image(Shape{1, 11, 11}, rng), random_image(Shape{1, 11, 11}, rng));
  CHECK(full.window == 11);
  CHECK_FALSE(full.window_shrunk);
}

TEST_CASE("quality triple agrees with the single measures") {
  const Shape s{1, 12, 12};
  Rng rng(RngSeed{4});
  const auto a = random_image(s, rng), b = random_image(s, rng);
  const auto q = quality(a, b);
  CHECK(q.mse == mse(a, b));
  CHECK(q.psnr == psnr(a, b));
  CHECK(q.ssim == ssim(a, b));
  const auto same = quality(a, a);
  CHECK(same.mse == 0.0);
  CHECK(same.psnr == kPsnrCap);
  CHECK(same.ssim == 1.0);
}

TEST_CASE("wsr counts target hits outside the target class") {
  const Shape s{1, 4, 4};
  const auto ds = random_dataset(50, s, 5, RngSeed{5});
  const auto wm = make_badnets_watermark(s, BadnetsVariant::line, 1.0, 2);
  CHECK(wsr(constant_classifier(s, 5, 2), ds, wm) == 1.0);
  CHECK(wsr(constant_classifier(s, 5, 3), ds, wm) == 0.0);

  std::vector<Sample> only_target;
  for (const auto &x : ds.items())
    if (x.label == 2)
      only_target.push_back(x);
  CHECK_THROWS_AS(wsr(constant_classifier(s, 5, 2), LabeledDataset(only_target, 5, "t"), wm),
                  EmptyInputError);
}

} // TEST_SUITE
