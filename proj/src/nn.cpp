#include "p2d/nn.hpp"

#include "p2d/error.hpp"
#include "p2d/rng.hpp"

#include <algorithm>
#include <cmath>

namespace p2d::nn {

Tensor to_tensor(const ImageD& img) {
  Tensor t = Tensor::zeros(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c)
    t.data.row(c) = Eigen::Map<const Eigen::RowVectorXd>(img.planes[c].data(), img.planes[c].size());
  return t;
}

ImageD to_image(const Tensor& t) {
  ImageD img = ImageD::zeros(t.channels, t.height, t.width);
  for (int c = 0; c < t.channels; ++c)
    Eigen::Map<Eigen::RowVectorXd>(img.planes[c].data(), img.planes[c].size()) = t.data.row(c);
  return img;
}

Conv2d::Conv2d(int in, int out, int k, int s, int p)
    : in_channels(in),
      out_channels(out),
      kernel(k),
      stride(s),
      padding(p),
      weight(Eigen::MatrixXd::Zero(out, in * k * k)),
      bias(Eigen::VectorXd::Zero(out)),
      grad_weight(Eigen::MatrixXd::Zero(out, in * k * k)),
      grad_bias(Eigen::VectorXd::Zero(out)) {}

void Conv2d::zero_grad() {
  grad_weight.setZero(weight.rows(), weight.cols());
  grad_bias.setZero(bias.size());
}

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const {
  if (x.channels != in_channels)
    throw Error(ErrorCode::ShapeError, "conv expects " + std::to_string(in_channels) + " channels, got " +
                                           std::to_string(x.channels));
  const int oh = output_size(x.height), ow = output_size(x.width);
  if (oh < 1 || ow < 1) throw Error(ErrorCode::ShapeError, "input too small for convolution");
  Eigen::MatrixXd columns = Eigen::MatrixXd::Zero(in_channels * kernel * kernel, static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < in_channels; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= x.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= x.width) continue;
            columns(row, static_cast<Eigen::Index>(oy) * ow + ox) = x.at(c, iy, ix);
          }
        }
      }
  Tensor y{out_channels, oh, ow, weight * columns};
  y.data.colwise() += bias;
  if (cache) {
    cache->columns = std::move(columns);
    cache->in_height = x.height;
    cache->in_width = x.width;
  }
  return y;
}

Tensor Conv2d::backward(const Cache& cache, const Tensor& grad_out) {
  grad_weight.noalias() += grad_out.data * cache.columns.transpose();
  grad_bias += grad_out.data.rowwise().sum();
  const Eigen::MatrixXd dcols = weight.transpose() * grad_out.data;
  Tensor dx = Tensor::zeros(in_channels, cache.in_height, cache.in_width);
  const int oh = grad_out.height, ow = grad_out.width;
  for (int c = 0; c < in_channels; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= cache.in_height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= cache.in_width) continue;
            dx.at(c, iy, ix) += dcols(row, static_cast<Eigen::Index>(oy) * ow + ox);
          }
        }
      }
  return dx;
}

// ---------------------------------------------------------------------------

Tensor ConvStack::forward(const Tensor& x, Trace* trace) const {
  if (trace) {
    trace->conv.assign(layers.size(), {});
    trace->pre_activation.assign(layers.size(), {});
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Tensor y = layers[i].forward(h, trace ? &trace->conv[i] : nullptr);
    if (i + 1 == layers.size()) return y;
    h = y;
    h.data = y.data.unaryExpr([](double v) { return v > 0 ? v : kLeakySlope * v; });
    if (trace) trace->pre_activation[i] = std::move(y);
  }
  return h;
}

Tensor ConvStack::backward(const Trace& trace, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) {
      const auto& pre = trace.pre_activation[i].data;
      g.data = g.data.cwiseProduct(pre.unaryExpr([](double v) { return v > 0 ? 1.0 : kLeakySlope; }));
    }
    g = layers[i].backward(trace.conv[i], g);
  }
  return g;
}

Eigen::Index ConvStack::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

Eigen::VectorXd ConvStack::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    flat.segment(k, l.weight.size()) = l.weight.reshaped();
    k += l.weight.size();
    flat.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return flat;
}

void ConvStack::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw Error(ErrorCode::ShapeError, "parameter vector size mismatch");
  Eigen::Index k = 0;
  for (auto& l : layers) {
    l.weight.reshaped() = flat.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

Eigen::VectorXd ConvStack::gradients() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    flat.segment(k, l.grad_weight.size()) = l.grad_weight.reshaped();
    k += l.grad_weight.size();
    flat.segment(k, l.grad_bias.size()) = l.grad_bias;
    k += l.grad_bias.size();
  }
  return flat;
}

void ConvStack::zero_grad() {
  for (auto& l : layers) l.zero_grad();
}

namespace {

void init_he(Conv2d& conv, Rng& rng, double gain) {
  const double fan_in = static_cast<double>(conv.in_channels) * conv.kernel * conv.kernel;
  const double stddev = gain * std::sqrt(2.0 / fan_in);
  for (Eigen::Index i = 0; i < conv.weight.size(); ++i) conv.weight.data()[i] = stddev * rng.normal();
}

}  // namespace

Generator::Generator(const GeneratorSpec& spec, std::uint64_t seed, bool identity_init, double init_gain)
    : spec_(spec) {
  Rng rng(seed);
  stack_.layers.emplace_back(3, spec.hidden, 3, 1, 1);
  for (int b = 0; b < spec.blocks; ++b) stack_.layers.emplace_back(spec.hidden, spec.hidden, 3, 1, 1);
  stack_.layers.emplace_back(spec.hidden, 3, 3, 1, 1);
  for (auto& l : stack_.layers) init_he(l, rng, init_gain);
  if (identity_init) {
    stack_.layers.back().weight.setZero();
    stack_.layers.back().bias.setZero();
  }
}

Tensor Generator::forward(const Tensor& x, Trace* trace) const {
  const auto clipped = x.data.array().max(kLogitEpsilon).min(1.0 - kLogitEpsilon);
  const Eigen::MatrixXd logit = (clipped / (1.0 - clipped)).log().matrix();
  Tensor residual = stack_.forward(x, trace ? &trace->stack : nullptr);
  Tensor out{x.channels, x.height, x.width,
             (1.0 / (1.0 + (-(logit + residual.data).array()).exp())).matrix()};
  if (trace) {
    trace->input = x;
    trace->output = out;
  }
  return out;
}

Tensor Generator::backward(const Trace& trace, const Tensor& grad_out) {
  const auto& out = trace.output.data.array();
  Tensor ds{grad_out.channels, grad_out.height, grad_out.width,
            (grad_out.data.array() * out * (1.0 - out)).matrix()};
  Tensor dx = stack_.backward(trace.stack, ds);
  const auto& x = trace.input.data.array();
  const Eigen::ArrayXXd dlogit = (x > kLogitEpsilon && x < 1.0 - kLogitEpsilon)
                                     .select(1.0 / (x * (1.0 - x)), Eigen::ArrayXXd::Zero(x.rows(), x.cols()));
  dx.data.array() += ds.data.array() * dlogit;
  return dx;
}

Discriminator::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed, double init_gain) : spec_(spec) {
  Rng rng(seed);
  int channels = 3;
  for (int i = 0; i < spec.downsample; ++i) {
    stack_.layers.emplace_back(channels, spec.hidden, 4, 2, 1);
    channels = spec.hidden;
  }
  stack_.layers.emplace_back(channels, 1, 3, 1, 1);
  for (auto& l : stack_.layers) init_he(l, rng, init_gain);
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  if (m_.size() != params.size()) {
    m_ = Eigen::VectorXd::Zero(params.size());
    v_ = Eigen::VectorXd::Zero(params.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
  v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace p2d::nn
