// SPDX-License-Identifier: Apache-2.0
#include <dovforge/error.hpp>
#include <dovforge/nn.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dovforge::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using MapConstVec = Eigen::Map<const Eigen::VectorXd>;

void he_uniform(std::span<double> w, std::size_t fan_in, double gain, Rng &rng) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double &v : w)
    v = rng.uniform(-bound, bound);
}

class Conv3x3 final : public Layer {
public:
  Conv3x3(int out, double gain, double bias)
      : out_(out), gain_(gain), bias_(bias) {}

  std::string name() const override {
    return "conv3x3(" + std::to_string(out_) + ")";
  }
  Shape output_shape(const Shape &in) const override {
    return {out_, in.height, in.width};
  }
  std::size_t param_count(const Shape &in) const override {
    return static_cast<std::size_t>(out_) * in.channels * 9 + out_;
  }
  void init(const Shape &in, std::span<double> p, Rng &rng) const override {
    const std::size_t nw = static_cast<std::size_t>(out_) * in.channels * 9;
    he_uniform(p.first(nw), static_cast<std::size_t>(in.channels) * 9, gain_,
               rng);
    std::fill(p.begin() + nw, p.end(), bias_);
  }

  void forward(const Shape &in_shape, std::span<const double> p,
               const Tensor &in, Tensor &out) const override {
    const int hw = in_shape.height * in_shape.width;
    const int k = in_shape.channels * 9;
    RowMat cols(k, hw);
    im2col(in_shape, in, cols);

    out = Tensor(output_shape(in_shape));
    MapConstMat w(p.data(), out_, k);
    MapConstVec b(p.data() + static_cast<std::size_t>(out_) * k, out_);
    MapMat o(out.data(), out_, hw);
    o.noalias() = w * cols;
    o.colwise() += b;
  }

  void backward(const Shape &in_shape, std::span<const double> p,
                const Tensor &in, const Tensor &, const Tensor &grad_out,
                Tensor *grad_in, std::span<double> pg) const override {
    const int hw = in_shape.height * in_shape.width;
    const int k = in_shape.channels * 9;
    MapConstMat g(grad_out.data(), out_, hw);
    MapConstMat w(p.data(), out_, k);

    if (!pg.empty()) {
      RowMat cols(k, hw);
      im2col(in_shape, in, cols);
      MapMat gw(pg.data(), out_, k);
      gw.noalias() += g * cols.transpose();
      MapVec gb(pg.data() + static_cast<std::size_t>(out_) * k, out_);
      gb += g.rowwise().sum();
    }
    if (grad_in) {
      RowMat dcols(k, hw);
      dcols.noalias() = w.transpose() * g;
      *grad_in = Tensor(in_shape);
      col2im(in_shape, dcols, *grad_in);
    }
  }

private:
  static void im2col(const Shape &s, const Tensor &in, RowMat &cols) {
    const int H = s.height, W = s.width;
    for (int c = 0; c < s.channels; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          double *row = cols.data() +
                        static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * H * W;
          for (int y = 0; y < H; ++y) {
            const int iy = y + ky - 1;
            for (int x = 0; x < W; ++x) {
              const int ix = x + kx - 1;
              row[y * W + x] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                   ? in.at(c, iy, ix)
                                   : 0.0;
            }
          }
        }
  }

  static void col2im(const Shape &s, const RowMat &cols, Tensor &out) {
    const int H = s.height, W = s.width;
    for (int c = 0; c < s.channels; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double *row =
              cols.data() +
              static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * H * W;
          for (int y = 0; y < H; ++y) {
            const int iy = y + ky - 1;
            if (iy < 0 || iy >= H)
              continue;
            for (int x = 0; x < W; ++x) {
              const int ix = x + kx - 1;
              if (ix >= 0 && ix < W)
                out.at(c, iy, ix) += row[y * W + x];
            }
          }
        }
  }

  int out_;
  double gain_;
  double bias_;
};

class Relu final : public Layer {
public:
  std::string name() const override { return "relu"; }
  Shape output_shape(const Shape &in) const override { return in; }
  void forward(const Shape &, std::span<const double>, const Tensor &in,
               Tensor &out) const override {
    out = in;
    for (double &v : out.values())
      v = v > 0.0 ? v : 0.0;
  }
  void backward(const Shape &, std::span<const double>, const Tensor &in,
                const Tensor &, const Tensor &g, Tensor *gi,
                std::span<double>) const override {
    if (!gi)
      return;
    *gi = g;
    for (std::size_t i = 0; i < in.size(); ++i)
      if (!(in[i] > 0.0))
        (*gi)[i] = 0.0;
  }
};

class Clamp01 final : public Layer {
public:
  std::string name() const override { return "clamp01"; }
  Shape output_shape(const Shape &in) const override { return in; }
  void forward(const Shape &, std::span<const double>, const Tensor &in,
               Tensor &out) const override {
    out = in;
    for (double &v : out.values())
      v = std::clamp(v, 0.0, 1.0);
  }
  void backward(const Shape &, std::span<const double>, const Tensor &in,
                const Tensor &, const Tensor &g, Tensor *gi,
                std::span<double>) const override {
    if (!gi)
      return;
    *gi = g;
    for (std::size_t i = 0; i < in.size(); ++i)
      if (!(in[i] > 0.0 && in[i] < 1.0))
        (*gi)[i] = 0.0;
  }
};

class MaxPool2 final : public Layer {
public:
  std::string name() const override { return "maxpool2"; }
  Shape output_shape(const Shape &in) const override {
    return {in.channels, in.height / 2, in.width / 2};
  }
  void forward(const Shape &s, std::span<const double>, const Tensor &in,
               Tensor &out) const override {
    const Shape os = output_shape(s);
    out = Tensor(os);
    for (int c = 0; c < os.channels; ++c)
      for (int y = 0; y < os.height; ++y)
        for (int x = 0; x < os.width; ++x) {
          const int y0 = 2 * y, x0 = 2 * x;
          out.at(c, y, x) =
              std::max(std::max(in.at(c, y0, x0), in.at(c, y0, x0 + 1)),
                       std::max(in.at(c, y0 + 1, x0), in.at(c, y0 + 1, x0 + 1)));
        }
  }
  void backward(const Shape &s, std::span<const double>, const Tensor &in,
                const Tensor &, const Tensor &g, Tensor *gi,
                std::span<double>) const override {
    if (!gi)
      return;
    const Shape os = output_shape(s);
    *gi = Tensor(s);
    for (int c = 0; c < os.channels; ++c)
      for (int y = 0; y < os.height; ++y)
        for (int x = 0; x < os.width; ++x) {
          // First maximal element in row-major window order gets the gradient.
          int by = 2 * y, bx = 2 * x;
          double best = in.at(c, by, bx);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const double v = in.at(c, 2 * y + dy, 2 * x + dx);
              if (v > best) {
                best = v;
                by = 2 * y + dy;
                bx = 2 * x + dx;
              }
            }
          gi->at(c, by, bx) += g.at(c, y, x);
        }
  }
};

class Linear final : public Layer {
public:
  Linear(int out, double gain) : out_(out), gain_(gain) {}

  std::string name() const override {
    return "linear(" + std::to_string(out_) + ")";
  }
  Shape output_shape(const Shape &) const override { return {out_, 1, 1}; }
  std::size_t param_count(const Shape &in) const override {
    return static_cast<std::size_t>(out_) * in.size() + out_;
  }
  void init(const Shape &in, std::span<double> p, Rng &rng) const override {
    const std::size_t nw = static_cast<std::size_t>(out_) * in.size();
    he_uniform(p.first(nw), in.size(), gain_, rng);
    std::fill(p.begin() + nw, p.end(), 0.0);
  }
  void forward(const Shape &s, std::span<const double> p, const Tensor &in,
               Tensor &out) const override {
    const auto d = static_cast<Eigen::Index>(s.size());
    out = Tensor(Shape{out_, 1, 1});
    MapConstMat w(p.data(), out_, d);
    MapConstVec b(p.data() + out_ * d, out_);
    MapVec o(out.data(), out_);
    o.noalias() = w * MapConstVec(in.data(), d) + b;
  }
  void backward(const Shape &s, std::span<const double> p, const Tensor &in,
                const Tensor &, const Tensor &g, Tensor *gi,
                std::span<double> pg) const override {
    const auto d = static_cast<Eigen::Index>(s.size());
    MapConstVec gv(g.data(), out_);
    if (!pg.empty()) {
      MapMat gw(pg.data(), out_, d);
      gw.noalias() += gv * MapConstVec(in.data(), d).transpose();
      MapVec(pg.data() + out_ * d, out_) += gv;
    }
    if (gi) {
      *gi = Tensor(s);
      MapVec(gi->data(), d).noalias() =
          MapConstMat(p.data(), out_, d).transpose() * gv;
    }
  }

private:
  int out_;
  double gain_;
};

} // namespace

std::shared_ptr<const Layer> conv3x3(int out_channels, double weight_gain,
                                     double bias_init) {
  if (out_channels <= 0)
    throw ConfigError("conv3x3 needs positive output channels");
  return std::make_shared<Conv3x3>(out_channels, weight_gain, bias_init);
}
std::shared_ptr<const Layer> relu() { return std::make_shared<Relu>(); }
std::shared_ptr<const Layer> maxpool2() { return std::make_shared<MaxPool2>(); }
std::shared_ptr<const Layer> linear(int out_features, double weight_gain) {
  if (out_features <= 0)
    throw ConfigError("linear needs positive output features");
  return std::make_shared<Linear>(out_features, weight_gain);
}
std::shared_ptr<const Layer> clamp01() { return std::make_shared<Clamp01>(); }

Sequential::Sequential(Shape input_shape,
                       std::vector<std::shared_ptr<const Layer>> layers)
    : layers_(std::move(layers)) {
  shapes_.push_back(input_shape);
  std::size_t total = 0;
  for (const auto &l : layers_) {
    const Shape in = shapes_.back();
    offsets_.push_back(total);
    total += l->param_count(in);
    const Shape out = l->output_shape(in);
    if (out.size() == 0)
      throw ShapeError("layer " + l->name() + " collapses input " + in.str());
    shapes_.push_back(out);
  }
  offsets_.push_back(total);
  params_.assign(total, 0.0);
}

void Sequential::init(Rng &rng) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::span<double> p(params_.data() + offsets_[i],
                        offsets_[i + 1] - offsets_[i]);
    layers_[i]->init(shapes_[i], p, rng);
  }
}

Tensor Sequential::forward(const Tensor &x) const {
  require_same_shape(x.shape(), input_shape(), "network input");
  Tensor cur = x, next;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::span<const double> p(params_.data() + offsets_[i],
                              offsets_[i + 1] - offsets_[i]);
    layers_[i]->forward(shapes_[i], p, cur, next);
    std::swap(cur, next);
  }
  return cur;
}

void Sequential::forward(const Tensor &x, Trace &trace) const {
  require_same_shape(x.shape(), input_shape(), "network input");
  trace.acts.resize(layers_.size() + 1);
  trace.acts[0] = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::span<const double> p(params_.data() + offsets_[i],
                              offsets_[i + 1] - offsets_[i]);
    layers_[i]->forward(shapes_[i], p, trace.acts[i], trace.acts[i + 1]);
  }
}

void Sequential::backward(const Trace &trace, const Tensor &grad_output,
                          std::span<double> param_grad,
                          Tensor *grad_input) const {
  require_same_shape(grad_output.shape(), output_shape(), "output gradient");
  if (!param_grad.empty() && param_grad.size() != params_.size())
    throw ShapeError("parameter gradient buffer has wrong length");

  Tensor g = grad_output, gin;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<const double> p(params_.data() + offsets_[i],
                              offsets_[i + 1] - offsets_[i]);
    std::span<double> pg;
    if (!param_grad.empty())
      pg = param_grad.subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
    // Below the first trainable layer the input gradient is only needed when
    // the caller asked for it.
    const bool need_input = i > 0 || grad_input != nullptr;
    layers_[i]->backward(shapes_[i], p, trace.acts[i], trace.acts[i + 1], g,
                         need_input ? &gin : nullptr, pg);
    if (!need_input)
      break;
    std::swap(g, gin);
  }
  if (grad_input)
    *grad_input = std::move(g);
}

std::string Sequential::describe() const {
  std::ostringstream os;
  os << input_shape().str();
  for (std::size_t i = 0; i < layers_.size(); ++i)
    os << " -> " << layers_[i]->name() << " " << shapes_[i + 1].str();
  return os.str();
}

} // namespace dovforge::nn
