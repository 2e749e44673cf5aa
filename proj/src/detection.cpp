// SPDX-License-Identifier: Apache-2.0
#include <dovforge/detection.hpp>
#include <dovforge/error.hpp>
#include <dovforge/parallel.hpp>
#include <dovforge/training.hpp>
#include <dovforge/watermarking.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace dovforge {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C[k][n] = a_k cos(pi (2n+1) k / 2N).
Eigen::MatrixXd dct_basis(int n) {
  Eigen::MatrixXd c(n, n);
  for (int k = 0; k < n; ++k) {
    const double a = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int i = 0; i < n; ++i)
      c(k, i) = a * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  }
  return c;
}

Tensor transform(const Tensor &in, bool inverse) {
  const Shape &s = in.shape();
  const Eigen::MatrixXd ch = dct_basis(s.height);
  const Eigen::MatrixXd cw = dct_basis(s.width);
  Tensor out(s);
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  for (int c = 0; c < s.channels; ++c) {
    Eigen::Map<const RowMat> x(in.data() + c * plane, s.height, s.width);
    Eigen::Map<RowMat> y(out.data() + c * plane, s.height, s.width);
    if (inverse)
      y = ch.transpose() * x * cw;
    else
      y = ch * x * cw.transpose();
  }
  return out;
}

Tensor random_fill(const Shape &s, Rng &rng) {
  Tensor t(s);
  const double u = rng.uniform();
  if (u < 0.5) { // solid color, saturated half the time
    const bool saturated = rng.below(2) == 0;
    std::vector<double> col(s.channels);
    for (auto &v : col)
      v = saturated ? static_cast<double>(rng.below(2)) : rng.uniform();
    for (int c = 0; c < s.channels; ++c)
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
          t.at(c, y, x) = col[c];
  } else if (u < 0.75) { // binary pattern
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const double v = rng.below(2) ? 1.0 : 0.0;
        for (int c = 0; c < s.channels; ++c)
          t.at(c, y, x) = v;
      }
  } else { // uniform noise
    for (double &v : t.values())
      v = rng.uniform();
  }
  return t;
}

} // namespace

Tensor dct2(const Tensor &image) { return transform(image, false); }

Tensor idct2(const Tensor &coefficients) { return transform(coefficients, true); }

ImageTensor dct_features(const ImageTensor &image) {
  // Magnitudes only: the sign pattern of a small patch depends on where it sits.
  Tensor t = dct2(image.tensor());
  for (double &v : t.values())
    v = std::tanh(20.0 * std::abs(v));
  return ImageTensor(std::move(t));
}

ImageTensor synthetic_corruption(const ImageTensor &image, Rng &rng) {
  const Shape &s = image.shape();
  Tensor out = image.tensor();
  // Full-replacement patches are drawn three times as often as the rest.
  constexpr std::uint64_t kKinds[] = {0, 0, 0, 1, 2, 3};
  const std::uint64_t kind = kKinds[rng.below(6)];
  if (kind == 3) {
    // Blended noise over the whole image.
    const double transparency = rng.uniform(0.1, 0.25);
    for (double &v : out.values())
      v = (1.0 - transparency) * v + transparency * rng.uniform();
    return ImageTensor::clamped(std::move(out));
  }
  int h, w;
  if (kind == 2) { // strip along one border
    const bool rows = rng.below(2) == 0;
    const int thick = 1 + static_cast<int>(rng.below(4));
    h = rows ? thick : s.height;
    w = rows ? s.width : thick;
  } else {
    h = 2 + static_cast<int>(rng.below(6));
    w = 2 + static_cast<int>(rng.below(6));
  }
  h = std::min(h, s.height);
  w = std::min(w, s.width);
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.height - h + 1)));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.width - w + 1)));
  const Tensor fill = random_fill(Shape{s.channels, h, w}, rng);
  // kind 1 keeps a random glyph mask of the patch; kinds 0 and 2 replace it.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (kind == 1 && rng.below(2) == 0)
        continue;
      for (int c = 0; c < s.channels; ++c)
        out.at(c, y0 + y, x0 + x) = fill.at(c, y, x);
    }
  return ImageTensor(std::move(out));
}

FrequencyDetector::FrequencyDetector(Classifier model, double threshold)
    : model_(std::move(model)), threshold_(threshold) {
  if (model_.num_classes() != 2)
    throw ConfigError("frequency detector needs a 2-class model");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("detector threshold must be in (0,1)");
}

double FrequencyDetector::score(const ImageTensor &image) const {
  return model_.predict_proba(dct_features(image).tensor())[1];
}

FrequencyDetector train_detector(const LabeledDataset &clean_ds,
                                 const std::vector<Watermark> &trigger_bank,
                                 const DetectorConfig &cfg) {
  if (clean_ds.empty())
    throw EmptyInputError("train_detector: empty clean dataset");
  for (const auto &wm : trigger_bank)
    require_same_shape(wm.shape(), clean_ds.image_shape(), "trigger bank entry");

  Rng rng(derive_seed(cfg.seed, "corruptions"));
  std::vector<Sample> items;
  items.reserve(2 * clean_ds.size());
  for (const auto &s : clean_ds.items()) {
    items.push_back({dct_features(s.image), 0});
    ImageTensor pos;
    if (!trigger_bank.empty() && rng.below(2) == 0)
      pos = embed(s.image, trigger_bank[rng.below(trigger_bank.size())]);
    else
      pos = synthetic_corruption(s.image, rng);
    items.push_back({dct_features(pos), 1});
  }
  const LabeledDataset train(std::move(items), 2, "detector");

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.seed = derive_seed(cfg.seed, "train");
  tc.cosine_decay = true;
  return FrequencyDetector(train_classifier(train, tc), cfg.threshold);
}

ScanResult scan_dataset(const FrequencyDetector &det, const LabeledDataset &ds) {
  ScanResult r;
  r.scores.resize(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) { r.scores[i] = det.score(ds[i].image); });
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (r.scores[i] >= det.threshold())
      r.flagged.push_back(i);
  return r;
}

double bwdr(const std::vector<std::size_t> &flagged,
            const std::vector<std::size_t> &truth) {
  if (truth.empty())
    throw EmptyInputError("bwdr: empty ground-truth set");
  std::vector<std::size_t> f(flagged), t(truth);
  std::sort(f.begin(), f.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  std::size_t hit = 0;
  for (std::size_t i : t)
    hit += std::binary_search(f.begin(), f.end(), i);
  return static_cast<double>(hit) / static_cast<double>(t.size());
}

double false_flag_rate(const std::vector<std::size_t> &flagged,
                       const std::vector<std::size_t> &truth, std::size_t n) {
  std::vector<char> poisoned(n, 0), hit(n, 0);
  for (std::size_t i : truth)
    if (i < n)
      poisoned[i] = 1;
  for (std::size_t i : flagged)
    if (i < n)
      hit[i] = 1;
  std::size_t clean = 0, wrong = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!poisoned[i]) {
      ++clean;
      wrong += hit[i];
    }
  if (clean == 0)
    throw EmptyInputError("false_flag_rate: no clean samples");
  return static_cast<double>(wrong) / static_cast<double>(clean);
}

int recover_target_label(const Classifier &model, const Watermark &wm,
                         const LabeledDataset &probe) {
  if (probe.empty())
    throw EmptyInputError("recover_target_label: empty probe set");
  std::vector<int> preds(probe.size());
  parallel_for(probe.size(), [&](std::size_t i) {
    preds[i] = predict_label(model, embed(probe[i].image, wm));
  });
  std::vector<std::size_t> votes(static_cast<std::size_t>(model.num_classes()), 0);
  for (int p : preds)
    ++votes[static_cast<std::size_t>(p)];
  std::vector<int> order(votes.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return votes[a] > votes[b]; });
  if (2 * votes[order[0]] <= probe.size())
    throw AmbiguityError("no label holds a strict majority (" +
                             std::to_string(votes[order[0]]) + " and " +
                             std::to_string(votes[order[1]]) + " of " +
                             std::to_string(probe.size()) + " votes)",
                         order[0], order[1]);
  return order[0];
}

void save_detector(const FrequencyDetector &det, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  save_model(det.model(), dir / "detector.bin");
  std::ofstream out(dir / "detector.json");
  if (!out)
    throw IoError("cannot write " + (dir / "detector.json").string());
  out << nlohmann::json{{"threshold", det.threshold()}}.dump(2) << "\n";
}

FrequencyDetector load_detector(const std::filesystem::path &dir) {
  std::ifstream in(dir / "detector.json");
  if (!in)
    throw IoError("cannot read " + (dir / "detector.json").string());
  const auto j = nlohmann::json::parse(in);
  return FrequencyDetector(load_model(dir / "detector.bin"),
                           j.at("threshold").get<double>());
}

void save_scan(const ScanResult &scan, const std::filesystem::path &file) {
  std::ofstream out(file);
  if (!out)
    throw IoError("cannot write " + file.string());
  std::vector<char> flag(scan.scores.size(), 0);
  for (std::size_t i : scan.flagged)
    flag[i] = 1;
  out << "index,score,flagged\n";
  char buf[64];
  for (std::size_t i = 0; i < scan.scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", scan.scores[i]);
    out << i << ',' << buf << ',' << int(flag[i]) << '\n';
  }
}

ScanResult load_scan(const std::filesystem::path &file) {
  std::ifstream in(file);
  if (!in)
    throw IoError("cannot read " + file.string());
  ScanResult r;
  std::string line;
  std::getline(in, line); // header
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') ||
        !std::getline(ss, c, ','))
      throw IoError("malformed flags row: " + line);
    const std::size_t idx = std::stoul(a);
    if (idx != r.scores.size())
      throw IoError("flags rows out of order at index " + a);
    r.scores.push_back(std::stod(b));
    if (std::stoi(c) != 0)
      r.flagged.push_back(idx);
  }
  return r;
}

} // namespace dovforge
