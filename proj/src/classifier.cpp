// SPDX-License-Identifier: Apache-2.0
#include <dovforge/classifier.hpp>
#include <dovforge/error.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dovforge {

namespace {

constexpr std::array<char, 8> kMagic{'D', 'O', 'V', 'F', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename U> void put_le(std::ostream &os, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U> U get_le(std::istream &is) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof())
      throw IoError("truncated model file");
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

} // namespace

std::string to_string(Architecture arch) {
  return arch == Architecture::mlp ? "mlp" : "small_cnn";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "small_cnn")
    return Architecture::small_cnn;
  if (s == "mlp")
    return Architecture::mlp;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

nn::Sequential build_network(Architecture arch, const Shape &input,
                             int num_classes) {
  if (num_classes < 2)
    throw ConfigError("classifier needs K >= 2");
  std::vector<std::shared_ptr<const nn::Layer>> layers;
  if (arch == Architecture::mlp) {
    layers = {nn::linear(128), nn::relu(), nn::linear(num_classes)};
  } else {
    constexpr std::array<int, 3> widths{12, 24, 32};
    int side = std::min(input.height, input.width);
    for (int w : widths) {
      if (side < 2)
        break;
      layers.push_back(nn::conv3x3(w));
      layers.push_back(nn::relu());
      layers.push_back(nn::maxpool2());
      side /= 2;
    }
    layers.push_back(nn::linear(num_classes));
  }
  return nn::Sequential(input, std::move(layers));
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0))
    throw ConfigError("softmax temperature must be positive");
  if (logits.empty())
    return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp((logits[k] - mx) / temperature);
    sum += p[k];
  }
  for (double &v : p)
    v /= sum;
  return p;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[best])
      best = static_cast<int>(k);
  return best;
}

Classifier::Classifier(Architecture arch, Shape input_shape, int num_classes,
                       RngSeed init_seed)
    : arch_(arch), num_classes_(num_classes),
      net_(build_network(arch, input_shape, num_classes)) {
  Rng rng(init_seed);
  net_.init(rng);
}

Classifier::Classifier(Architecture arch, nn::Sequential net, int num_classes)
    : arch_(arch), num_classes_(num_classes), net_(std::move(net)) {
  if (net_.output_shape().size() != static_cast<std::size_t>(num_classes_))
    throw ShapeError("network output does not have K entries");
}

std::vector<double> Classifier::logits(const Tensor &x) const {
  if (!(x.shape() == input_shape()))
    throw ShapeError("classifier expects input " + input_shape().str() +
                     ", got " + x.shape().str());
  const Tensor out = net_.forward(x);
  return {out.values().begin(), out.values().end()};
}

std::vector<double> Classifier::predict_proba(const Tensor &x,
                                              double temperature) const {
  return softmax(logits(x), temperature);
}

int Classifier::predict_label(const Tensor &x) const {
  return argmax(predict_proba(x, 1.0));
}

void Classifier::round_to_float32() {
  for (double &p : net_.mutable_params())
    p = static_cast<double>(static_cast<float>(p));
}

bool operator==(const Classifier &a, const Classifier &b) {
  return a.arch_ == b.arch_ && a.num_classes_ == b.num_classes_ &&
         a.input_shape() == b.input_shape() &&
         std::ranges::equal(a.net_.params(), b.net_.params());
}

std::vector<double> predict_proba(const Classifier &model,
                                  const ImageTensor &image,
                                  double temperature) {
  return model.predict_proba(image.tensor(), temperature);
}

int predict_label(const Classifier &model, const ImageTensor &image) {
  return model.predict_label(image.tensor());
}

void save_model(const Classifier &model, const std::filesystem::path &file) {
  std::ofstream os(file, std::ios::binary);
  if (!os)
    throw IoError("cannot write model " + file.string());
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kVersion);
  const std::string tag = to_string(model.architecture());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tag.size()));
  os.write(tag.data(), static_cast<std::streamsize>(tag.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.num_classes()));
  const Shape s = model.input_shape();
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.channels));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.height));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.width));
  const auto params = model.network().params();
  put_le<std::uint64_t>(os, params.size());
  for (double p : params)
    put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(p)));
  if (!os)
    throw IoError("failed writing model " + file.string());
}

Classifier load_model(const std::filesystem::path &file) {
  std::ifstream is(file, std::ios::binary);
  if (!is)
    throw IoError("cannot read model " + file.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (magic != kMagic)
    throw IoError(file.string() + " is not a dovforge model");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kVersion)
    throw IoError("unsupported model version " + std::to_string(version));
  const auto tag_len = get_le<std::uint32_t>(is);
  if (tag_len > 64)
    throw IoError("corrupt architecture tag");
  std::string tag(tag_len, '\0');
  is.read(tag.data(), tag_len);
  const int k = static_cast<int>(get_le<std::uint32_t>(is));
  Shape s;
  s.channels = static_cast<int>(get_le<std::uint32_t>(is));
  s.height = static_cast<int>(get_le<std::uint32_t>(is));
  s.width = static_cast<int>(get_le<std::uint32_t>(is));
  const auto count = get_le<std::uint64_t>(is);

  const Architecture arch = architecture_from_string(tag);
  Classifier model(arch, build_network(arch, s, k), k);
  auto params = model.mutable_network().mutable_params();
  if (params.size() != count)
    throw IoError("parameter count " + std::to_string(count) +
                  " does not match architecture (" +
                  std::to_string(params.size()) + ")");
  for (double &p : params)
    p = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(is)));
  return model;
}

} // namespace dovforge
