// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <dovforge/classifier.hpp>
#include <dovforge/dataset.hpp>
#include <dovforge/png_io.hpp>
#include <dovforge/rng.hpp>
#include <dovforge/synthetic.hpp>

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

using namespace dovforge;
using namespace testing;

TEST_SUITE("core") {

TEST_CASE("softmax closed forms") {
  const std::vector<double> zeros{0, 0, 0};
  for (double p : softmax(zeros, 1.0))
    CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const std::vector<double> two{2, 0};
  const double e2 = std::exp(2.0);
  auto p1 = softmax(two, 1.0);
  CHECK(p1[0] == doctest::Approx(e2 / (e2 + 1)).epsilon(1e-12));
  CHECK(p1[1] == doctest::Approx(1 / (e2 + 1)).epsilon(1e-12));
  CHECK(p1[0] == doctest::Approx(0.8808).epsilon(1e-4));

  auto p500 = softmax(two, 500.0);
  const double a = std::exp(2.0 / 500.0);
  CHECK(p500[0] == doctest::Approx(a / (a + 1)).epsilon(1e-12));
  CHECK(p500[0] == doctest::Approx(0.5010).epsilon(1e-4));
  CHECK(p500[1] == doctest::Approx(0.4990).epsilon(1e-4));

  CHECK_THROWS_AS(softmax(two, 0.0), ConfigError);
}

TEST_CASE("softmax sums to one and ignores logit shifts") {
  Rng rng(RngSeed{7});
  for (double t : {1.0, 500.0, 800.0}) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> s(10);
      for (double &v : s)
        v = 20.0 * rng.normal();
      const auto p = softmax(s, t);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));

      const double c = 100.0 * rng.uniform(-1, 1);
      auto shifted = s;
      for (double &v : shifted)
        v += c;
      const auto q = softmax(shifted, t);
      for (std::size_t k = 0; k < p.size(); ++k)
        CHECK(std::abs(p[k] - q[k]) < 1e-6);
    }
  }
}

TEST_CASE("argmax picks the first of tied maxima") {
  CHECK(argmax(std::vector<double>{0.1, 0.7, 0.2}) == 1);
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  for (int k = 0; k < 5; ++k) {
    std::vector<double> onehot(5, 0.0);
    onehot[k] = 1.0;
    CHECK(argmax(onehot) == k);
  }
}

TEST_CASE("predict_label agrees with predict_proba") {
  const Shape s{3, 8, 8};
  Classifier model(Architecture::small_cnn, s, 10, RngSeed{3});
  Rng rng(RngSeed{4});
  for (int i = 0; i < 100; ++i) {
    const auto x = random_image(s, rng);
    const auto p = predict_proba(model, x, 1.0);
    CHECK(predict_label(model, x) == argmax(p));
  }
}

TEST_CASE("predict_proba rejects a wrong input shape") {
  Classifier model(Architecture::mlp, Shape{1, 4, 4}, 3, RngSeed{1});
  CHECK_THROWS_AS(predict_proba(model, constant_image(Shape{1, 5, 4}, 0.5)), ShapeError);
}

TEST_CASE("temperature flattens the distribution") {
  const Shape s{1, 1, 2};
  auto model = linear_classifier(s, 2, {1, 0, 0, 1, 0, 0});
  const auto x = ImageTensor(s, std::vector<double>{1.0, 0.0});
  const auto p1 = predict_proba(model, x, 1.0);
  const auto p800 = predict_proba(model, x, 800.0);
  CHECK(p1[0] > p800[0]);
  CHECK(p800[0] > 0.5);
  CHECK(p800[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0 / 800.0))).epsilon(1e-12));
}

TEST_CASE("split_dataset partitions deterministically") {
  const auto ds = random_dataset(10, Shape{1, 2, 2}, 2, RngSeed{1});
  auto half = split_dataset(ds, 0.5, RngSeed{9});
  CHECK(half.first.size() == 5);
  CHECK(half.second.size() == 5);
  auto tenth = split_dataset(ds, 0.1, RngSeed{9});
  CHECK(tenth.first.size() == 1);
  CHECK(tenth.second.size() == 9);

  auto again = split_dataset(ds, 0.5, RngSeed{9});
  CHECK(again.first_indices == half.first_indices);
  CHECK(again.first == half.first);

  std::set<std::size_t> all(half.first_indices.begin(), half.first_indices.end());
  for (std::size_t i : half.second_indices)
    CHECK(all.insert(i).second);
  CHECK(all.size() == ds.size());
  CHECK(*all.rbegin() == ds.size() - 1);
  CHECK(half.first.num_classes() == ds.num_classes());
  CHECK(half.first.image_shape() == ds.image_shape());

  CHECK_THROWS_AS(split_dataset(LabeledDataset{}, 0.5, RngSeed{1}), EmptyInputError);
}

TEST_CASE("seed derivation is stable and stream-sensitive") {
  const RngSeed root{42};
  CHECK(derive_seed(root, "a") == derive_seed(root, "a"));
  CHECK_FALSE(derive_seed(root, "a") == derive_seed(root, "b"));
  CHECK_FALSE(derive_seed(root, "a") == derive_seed(RngSeed{43}, "a"));

  Rng a(RngSeed{5}), b(RngSeed{5});
  for (int i = 0; i < 20; ++i)
    CHECK(a.normal() == b.normal());
  auto picks = Rng(RngSeed{6}).sample_without_replacement(50, 20);
  CHECK(picks.size() == 20);
  CHECK(std::is_sorted(picks.begin(), picks.end()));
  CHECK(std::adjacent_find(picks.begin(), picks.end()) == picks.end());
}

TEST_CASE("synthetic data is balanced and reproducible") {
  SyntheticConfig cfg{.count = 200, .channels = 3, .height = 16, .width = 16, .seed = RngSeed{2}};
  const auto a = make_synthetic_dataset(cfg);
  const auto b = make_synthetic_dataset(cfg);
  CHECK(a == b);
  std::vector<int> counts(10, 0);
  for (const auto &s : a.items())
    ++counts[s.label];
  for (int c : counts)
    CHECK(c == 20);
  for (const auto &s : a.items())
    for (double v : s.image.values())
      CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("dataset, indices and png round trips") {
  const auto dir = scratch_dir("core-io");
  SyntheticConfig cfg{.count = 30, .channels = 3, .height = 8, .width = 8, .seed = RngSeed{1}};
  const auto ds = make_synthetic_dataset(cfg);
  save_dataset(ds, dir / "ds");
  CHECK(load_dataset(dir / "ds") == ds);

  const std::vector<std::size_t> idx{0, 3, 17, 29};
  save_indices(idx, dir / "idx.csv");
  CHECK(load_indices(dir / "idx.csv") == idx);
  // A multi-column CSV is not an index list.
  std::ofstream(dir / "scan.csv") << "index,score,flagged\n0,0.3,0\n1,0.9,1\n";
  CHECK_THROWS_AS(load_indices(dir / "scan.csv"), IoError);

  Rng rng(RngSeed{3});
  const auto img = random_image(Shape{1, 5, 7}, rng).quantized();
  write_png(img, dir / "g.png");
  CHECK(read_png(dir / "g.png") == img);

  CHECK_THROWS_AS(load_dataset(dir / "missing"), IoError);
}

TEST_CASE("model save and load round trip") {
  const auto dir = scratch_dir("core-model");
  Classifier model(Architecture::small_cnn, Shape{3, 8, 8}, 4, RngSeed{11});
  model.round_to_float32();
  save_model(model, dir / "m.bin");
  const auto back = load_model(dir / "m.bin");
  CHECK(back == model);
  CHECK(back.num_classes() == 4);
  CHECK(back.architecture() == Architecture::small_cnn);
}

} // TEST_SUITE
