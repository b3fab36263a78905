#pragma once

#include "p2d/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace p2d::nn {

/// Dense C×H×W activation, stored as a (channels × height·width) matrix.
template <typename Scalar>
struct TensorT {
  int channels = 0;
  int height = 0;
  int width = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> data;

  static TensorT zeros(int c, int h, int w) {
    return {c, h, w, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(c, static_cast<Eigen::Index>(h) * w)};
  }
  static TensorT constant(int c, int h, int w, Scalar v) {
    return {c, h, w,
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Constant(c, static_cast<Eigen::Index>(h) * w, v)};
  }

  bool same_shape(const TensorT& o) const { return channels == o.channels && height == o.height && width == o.width; }
  Scalar& at(int c, int y, int x) { return data(c, static_cast<Eigen::Index>(y) * width + x); }
  Scalar at(int c, int y, int x) const { return data(c, static_cast<Eigen::Index>(y) * width + x); }
};

using Tensor = TensorT<double>;

Tensor to_tensor(const ImageD& img);
ImageD to_image(const Tensor& t);

inline constexpr double kLeakySlope = 0.2;

/// 2-D convolution with zero padding, weights laid out (out) × (in·k·k).
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Eigen::MatrixXd grad_weight;
  Eigen::VectorXd grad_bias;

  struct Cache {
    Eigen::MatrixXd columns;
    int in_height = 0;
    int in_width = 0;
  };

  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int padding);

  int output_size(int input) const { return (input + 2 * padding - kernel) / stride + 1; }
  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
  Tensor backward(const Cache& cache, const Tensor& grad_out);

  Eigen::Index parameter_count() const { return weight.size() + bias.size(); }
  void zero_grad();
};

/// Convolutions with leaky ReLU between them and a linear final layer.
class ConvStack {
 public:
  struct Trace {
    std::vector<Conv2d::Cache> conv;
    std::vector<Tensor> pre_activation;
  };

  std::vector<Conv2d> layers;

  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  Tensor backward(const Trace& trace, const Tensor& grad_out);

  Eigen::Index parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);
  Eigen::VectorXd gradients() const;
  void zero_grad();
};

struct GeneratorSpec {
  int hidden = 16;
  int blocks = 1;  // hidden→hidden convolutions between input and output layers
};

/// Residual translator in logit space: out = sigmoid(logit(x) + f(x)). With the final
/// layer zeroed it is the identity up to the input clip of kLogitEpsilon.
class Generator {
 public:
  static constexpr double kLogitEpsilon = 1e-4;

  struct Trace {
    Tensor input;
    Tensor output;
    ConvStack::Trace stack;
  };

  Generator() = default;
  Generator(const GeneratorSpec& spec, std::uint64_t seed, bool identity_init, double init_gain = 1.0);

  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  Tensor backward(const Trace& trace, const Tensor& grad_out);

  const GeneratorSpec& spec() const { return spec_; }
  ConvStack& stack() { return stack_; }
  const ConvStack& stack() const { return stack_; }

 private:
  GeneratorSpec spec_;
  ConvStack stack_;
};

struct DiscriminatorSpec {
  int hidden = 16;
  int downsample = 2;  // stride-2 4×4 convolutions before the 3×3 scoring layer
};

/// Patch discriminator returning a map of raw logits.
class Discriminator {
 public:
  using Trace = ConvStack::Trace;

  Discriminator() = default;
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed, double init_gain = 1.0);

  Tensor forward(const Tensor& x, Trace* trace = nullptr) const { return stack_.forward(x, trace); }
  Tensor backward(const Trace& trace, const Tensor& grad_out) { return stack_.backward(trace, grad_out); }

  const DiscriminatorSpec& spec() const { return spec_; }
  ConvStack& stack() { return stack_; }
  const ConvStack& stack() const { return stack_; }

 private:
  DiscriminatorSpec spec_;
  ConvStack stack_;
};

/// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(double learning_rate, double beta1, double beta2, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  /// params -= step(gradient)
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace p2d::nn
