// Copyright 2026 The latentdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Desk-scale differentiable models: linear heads (least squares, ridge,
// logistic) and two autoencoders, with analytic gradients, exact Hessians
// and the training loops used throughout the pipeline.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentdp/dual.hpp"
#include "latentdp/error.hpp"
#include "latentdp/rng.hpp"

namespace latentdp {

enum class ModelFamily : std::uint32_t {
  kLeastSquares = 0,
  kRidge = 1,
  kLogistic = 2,
  kLinearAutoencoder = 3,
  kMlpAutoencoder = 4,
};

inline const char* to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::kLeastSquares: return "least_squares";
    case ModelFamily::kRidge: return "ridge";
    case ModelFamily::kLogistic: return "logistic";
    case ModelFamily::kLinearAutoencoder: return "linear_autoencoder";
    case ModelFamily::kMlpAutoencoder: return "mlp_autoencoder";
  }
  return "unknown";
}

inline ModelFamily model_family_from_string(const std::string& s) {
  for (auto f : {ModelFamily::kLeastSquares, ModelFamily::kRidge, ModelFamily::kLogistic,
                 ModelFamily::kLinearAutoencoder, ModelFamily::kMlpAutoencoder}) {
    if (s == to_string(f)) return f;
  }
  throw InvalidArgument("unknown model family '" + s + "'");
}

inline bool is_linear_head(ModelFamily f) {
  return f == ModelFamily::kLeastSquares || f == ModelFamily::kRidge || f == ModelFamily::kLogistic;
}
inline bool is_autoencoder(ModelFamily f) {
  return f == ModelFamily::kLinearAutoencoder || f == ModelFamily::kMlpAutoencoder;
}

struct ModelHyper {
  double lambda = 0.0;         // l2 regularization strength
  bool fit_intercept = false;  // linear heads: trailing bias per output
  int latent_dim = 0;          // autoencoders
  int hidden_dim = 0;          // mlp_autoencoder (tanh layers)

  friend bool operator==(const ModelHyper&, const ModelHyper&) = default;
};

// A parameter vector plus the family that interprets it.
//
// Linear heads store an output_dim x (input_dim + fit_intercept) matrix in
// row-major order; row k predicts output k. Autoencoders reconstruct their
// input (output_dim == input_dim) through a latent_dim bottleneck.
struct Model {
  ModelFamily family = ModelFamily::kLeastSquares;
  ModelHyper hyper;
  int input_dim = 0;
  int output_dim = 0;
  Eigen::VectorXd parameters;

  Eigen::Index head_width() const { return input_dim + (hyper.fit_intercept ? 1 : 0); }

  Eigen::Index expected_parameter_count() const {
    const Eigen::Index in = input_dim, d = hyper.latent_dim, h = hyper.hidden_dim;
    switch (family) {
      case ModelFamily::kLeastSquares:
      case ModelFamily::kRidge:
      case ModelFamily::kLogistic:
        return static_cast<Eigen::Index>(output_dim) * head_width();
      case ModelFamily::kLinearAutoencoder:
        return d * in + in;
      case ModelFamily::kMlpAutoencoder:
        return (h * in + h) + (d * h + d) + (h * d + h) + (in * h + in);
    }
    return 0;
  }

  void validate() const {
    detail::require(input_dim >= 1 && output_dim >= 1, "Model: dimensions must be >= 1");
    detail::require(hyper.lambda >= 0.0 && std::isfinite(hyper.lambda), "Model: lambda must be >= 0");
    if (family == ModelFamily::kLeastSquares) {
      detail::require(hyper.lambda == 0.0, "Model: least_squares has lambda = 0");
    }
    if (is_autoencoder(family)) {
      detail::require(output_dim == input_dim, "Model: autoencoder output_dim must equal input_dim");
      detail::require(hyper.latent_dim >= 1, "Model: autoencoder latent_dim must be >= 1");
      detail::require(!hyper.fit_intercept, "Model: fit_intercept applies to linear heads only");
    }
    if (family == ModelFamily::kMlpAutoencoder) {
      detail::require(hyper.hidden_dim >= 1, "Model: mlp_autoencoder hidden_dim must be >= 1");
    }
    if (parameters.size() != expected_parameter_count()) {
      throw DimensionMismatch("Model: parameter count " + std::to_string(parameters.size()) +
                              " does not match family layout (" +
                              std::to_string(expected_parameter_count()) + ")");
    }
  }

  int latent_dim() const { return hyper.latent_dim; }

  friend bool operator==(const Model&, const Model&) = default;

  // Zero-initialized model of the given shape.
  static Model make(ModelFamily family, int input_dim, int output_dim, ModelHyper hyper = {}) {
    Model m{family, hyper, input_dim, output_dim, {}};
    m.parameters = Eigen::VectorXd::Zero(m.expected_parameter_count());
    m.validate();
    return m;
  }

  // Linear autoencoder with an identity encoder and zero bias.
  static Model identity_autoencoder(int dim) {
    Model m = make(ModelFamily::kLinearAutoencoder, dim, dim, {0.0, false, dim, 0});
    for (int i = 0; i < dim; ++i) m.parameters[static_cast<Eigen::Index>(i) * dim + i] = 1.0;
    return m;
  }
};

// Rows of `inputs` are examples; `targets` has one row per example (it may
// have zero columns for autoencoders, which reconstruct their input).
struct SampleSet {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  Eigen::Index size() const { return inputs.rows(); }
  bool empty() const { return inputs.rows() == 0; }

  static SampleSet empty_like(Eigen::Index input_dim, Eigen::Index target_dim) {
    return {Eigen::MatrixXd(0, input_dim), Eigen::MatrixXd(0, target_dim)};
  }
};

struct ImageTensor {
  int height = 0;
  int width = 0;
  Eigen::VectorXd pixels;  // row-major, values in [0, 1]

  ImageTensor() = default;
  ImageTensor(int h, int w) : height(h), width(w), pixels(Eigen::VectorXd::Zero(Eigen::Index{h} * w)) {}
  ImageTensor(int h, int w, Eigen::VectorXd px) : height(h), width(w), pixels(std::move(px)) {
    if (pixels.size() != Eigen::Index{h} * w) {
      throw DimensionMismatch("ImageTensor: pixel count does not match height * width");
    }
  }

  double& at(int row, int col) { return pixels[Eigen::Index{row} * width + col]; }
  double at(int row, int col) const { return pixels[Eigen::Index{row} * width + col]; }
  Eigen::Index size() const { return pixels.size(); }

  friend bool operator==(const ImageTensor& a, const ImageTensor& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
  }
};

using GradientVector = Eigen::VectorXd;

namespace detail {

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// log(1 + exp(s)) without overflow.
inline double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

inline void check_input(const Model& m, Eigen::Index input_size) {
  if (input_size != m.input_dim) {
    throw DimensionMismatch("input has dimension " + std::to_string(input_size) + ", model expects " +
                            std::to_string(m.input_dim));
  }
}

inline void check_target(const Model& m, Eigen::Index target_size) {
  if (is_linear_head(m.family) && target_size != m.output_dim) {
    throw DimensionMismatch("target has dimension " + std::to_string(target_size) +
                            ", model expects " + std::to_string(m.output_dim));
  }
}

// Design matrix with an optional trailing column of ones.
inline Eigen::MatrixXd augmented(const Model& m, const Eigen::MatrixXd& inputs) {
  if (!m.hyper.fit_intercept) return inputs;
  Eigen::MatrixXd xa(inputs.rows(), inputs.cols() + 1);
  xa.leftCols(inputs.cols()) = inputs;
  xa.col(inputs.cols()).setOnes();
  return xa;
}

inline Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
head_matrix(const Model& m) {
  return {m.parameters.data(), m.output_dim, m.head_width()};
}

// Per-family regularizer R(w): lambda |w|^2 for least squares / ridge,
// lambda / 2 |w|^2 otherwise. Returns the scalar c with grad R = c w.
inline double regularizer_scale(const Model& m) {
  return (m.family == ModelFamily::kLeastSquares || m.family == ModelFamily::kRidge)
             ? 2.0 * m.hyper.lambda
             : m.hyper.lambda;
}

// ---- Autoencoder kernels, templated so Dual parameters yield H v. ----

template <typename S>
struct AeBuffers {
  std::vector<S> a1, h1, z, a3, h3, out, g_out, g_h3, g_a3, g_z, g_h1, g_a1;
};

// Reconstruction x_hat for the linear autoencoder: E^T E (x - b) + b.
template <typename S>
void linear_ae_forward(const Model& m, const S* p, const double* x, std::vector<S>& z,
                       std::vector<S>& out) {
  const int in = m.input_dim, d = m.hyper.latent_dim;
  const S* enc = p;
  const S* bias = p + static_cast<std::ptrdiff_t>(d) * in;
  z.assign(d, S(0.0));
  for (int j = 0; j < d; ++j) {
    S acc(0.0);
    for (int i = 0; i < in; ++i) acc += enc[j * in + i] * (S(x[i]) - bias[i]);
    z[j] = acc;
  }
  out.assign(in, S(0.0));
  for (int i = 0; i < in; ++i) {
    S acc = bias[i];
    for (int j = 0; j < d; ++j) acc += enc[j * in + i] * z[j];
    out[i] = acc;
  }
}

// Adds d loss(x)/d params into grad; returns the loss.
template <typename S>
S linear_ae_grad(const Model& m, const S* p, const double* x, S* grad) {
  const int in = m.input_dim, d = m.hyper.latent_dim;
  const S* enc = p;
  const S* bias = p + static_cast<std::ptrdiff_t>(d) * in;
  S* g_enc = grad;
  S* g_bias = grad + static_cast<std::ptrdiff_t>(d) * in;
  std::vector<S> z, out;
  linear_ae_forward(m, p, x, z, out);
  S loss(0.0);
  std::vector<S> g_out(in);
  for (int i = 0; i < in; ++i) {
    const S r = out[i] - S(x[i]);
    loss += r * r;
    g_out[i] = S(2.0) * r;
    g_bias[i] += g_out[i];
  }
  // Decoder: out = E^T z + b.
  std::vector<S> g_z(d, S(0.0));
  for (int j = 0; j < d; ++j) {
    S acc(0.0);
    for (int i = 0; i < in; ++i) {
      g_enc[j * in + i] += z[j] * g_out[i];
      acc += enc[j * in + i] * g_out[i];
    }
    g_z[j] = acc;
  }
  // Encoder: z = E (x - b).
  for (int i = 0; i < in; ++i) {
    S g_u(0.0);
    for (int j = 0; j < d; ++j) {
      g_enc[j * in + i] += g_z[j] * (S(x[i]) - bias[i]);
      g_u += enc[j * in + i] * g_z[j];
    }
    g_bias[i] -= g_u;
  }
  return loss;
}

struct MlpLayout {
  std::ptrdiff_t w1, b1, w2, b2, w3, b3, w4, b4;
  explicit MlpLayout(const Model& m) {
    const std::ptrdiff_t in = m.input_dim, d = m.hyper.latent_dim, h = m.hyper.hidden_dim;
    w1 = 0;
    b1 = w1 + h * in;
    w2 = b1 + h;
    b2 = w2 + d * h;
    w3 = b2 + d;
    b3 = w3 + h * d;
    w4 = b3 + h;
    b4 = w4 + in * h;
  }
};

// y = tanh?(W x + b) for a row-major (rows x cols) W.
template <typename S, typename X>
void dense_layer(const S* w, const S* b, const X* x, int rows, int cols, bool activate,
                 std::vector<S>& y) {
  y.assign(rows, S(0.0));
  for (int r = 0; r < rows; ++r) {
    S acc = b[r];
    for (int c = 0; c < cols; ++c) acc += w[r * cols + c] * S(x[c]);
    if (activate) {
      using std::tanh;
      acc = tanh(acc);
    }
    y[r] = acc;
  }
}

template <typename S>
void mlp_encode(const Model& m, const S* p, const double* x, std::vector<S>& h1, std::vector<S>& z) {
  const MlpLayout L(m);
  const int in = m.input_dim, d = m.hyper.latent_dim, h = m.hyper.hidden_dim;
  dense_layer(p + L.w1, p + L.b1, x, h, in, true, h1);
  dense_layer(p + L.w2, p + L.b2, h1.data(), d, h, false, z);
}

template <typename S, typename Z>
void mlp_decode(const Model& m, const S* p, const Z* z, std::vector<S>& h3, std::vector<S>& out) {
  const MlpLayout L(m);
  const int in = m.input_dim, d = m.hyper.latent_dim, h = m.hyper.hidden_dim;
  dense_layer(p + L.w3, p + L.b3, z, h, d, true, h3);
  dense_layer(p + L.w4, p + L.b4, h3.data(), in, h, false, out);
}

// Backprop through y = act(W x + b) given dL/dy; accumulates into gw, gb
// and writes dL/dx into gx (if non-null).
template <typename S, typename X>
void dense_backward(const S* w, const X* x, const std::vector<S>& y, std::vector<S> gy, int rows,
                    int cols, bool activated, S* gw, S* gb, std::vector<S>* gx) {
  if (activated) {
    for (int r = 0; r < rows; ++r) gy[r] = gy[r] * (S(1.0) - y[r] * y[r]);
  }
  for (int r = 0; r < rows; ++r) {
    gb[r] += gy[r];
    for (int c = 0; c < cols; ++c) gw[r * cols + c] += gy[r] * S(x[c]);
  }
  if (gx != nullptr) {
    gx->assign(cols, S(0.0));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) (*gx)[c] += w[r * cols + c] * gy[r];
    }
  }
}

template <typename S>
S mlp_ae_grad(const Model& m, const S* p, const double* x, S* grad) {
  const MlpLayout L(m);
  const int in = m.input_dim, d = m.hyper.latent_dim, h = m.hyper.hidden_dim;
  std::vector<S> h1, z, h3, out;
  mlp_encode(m, p, x, h1, z);
  mlp_decode(m, p, z.data(), h3, out);
  S loss(0.0);
  std::vector<S> g_out(in);
  for (int i = 0; i < in; ++i) {
    const S r = out[i] - S(x[i]);
    loss += r * r;
    g_out[i] = S(2.0) * r;
  }
  std::vector<S> g_h3, g_z, g_h1;
  dense_backward(p + L.w4, h3.data(), out, g_out, in, h, false, grad + L.w4, grad + L.b4, &g_h3);
  dense_backward(p + L.w3, z.data(), h3, g_h3, h, d, true, grad + L.w3, grad + L.b3, &g_z);
  dense_backward(p + L.w2, h1.data(), z, g_z, d, h, false, grad + L.w2, grad + L.b2, &g_h1);
  dense_backward<S, double>(p + L.w1, x, h1, g_h1, h, in, true, grad + L.w1, grad + L.b1, nullptr);
  return loss;
}

template <typename S>
S autoencoder_grad(const Model& m, const S* p, const double* x, S* grad) {
  return m.family == ModelFamily::kLinearAutoencoder ? linear_ae_grad(m, p, x, grad)
                                                     : mlp_ae_grad(m, p, x, grad);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-example loss and gradient. The regularizer is a dataset-level term and
// is not included here.

inline double example_loss(const Model& model, const Eigen::VectorXd& input,
                           const Eigen::VectorXd& target) {
  detail::check_input(model, input.size());
  detail::check_target(model, target.size());
  if (is_autoencoder(model.family)) {
    std::vector<double> grad(model.parameters.size(), 0.0);
    return detail::autoencoder_grad(model, model.parameters.data(), input.data(), grad.data());
  }
  const auto w = detail::head_matrix(model);
  double loss = 0.0;
  for (int k = 0; k < model.output_dim; ++k) {
    double s = w.row(k).head(model.input_dim).dot(input);
    if (model.hyper.fit_intercept) s += w(k, model.input_dim);
    if (model.family == ModelFamily::kLogistic) {
      // -[y log sigma(s) + (1 - y) log(1 - sigma(s))]
      loss += detail::softplus(s) - target[k] * s;
    } else {
      loss += (s - target[k]) * (s - target[k]);
    }
  }
  return loss;
}

inline GradientVector loss_grad(const Model& model, const Eigen::VectorXd& input,
                                const Eigen::VectorXd& target) {
  detail::check_input(model, input.size());
  detail::check_target(model, target.size());
  GradientVector grad = GradientVector::Zero(model.parameters.size());
  if (is_autoencoder(model.family)) {
    detail::autoencoder_grad(model, model.parameters.data(), input.data(), grad.data());
    return grad;
  }
  const auto w = detail::head_matrix(model);
  const Eigen::Index width = model.head_width();
  for (int k = 0; k < model.output_dim; ++k) {
    double s = w.row(k).head(model.input_dim).dot(input);
    if (model.hyper.fit_intercept) s += w(k, model.input_dim);
    const double residual =
        model.family == ModelFamily::kLogistic ? detail::sigmoid(s) - target[k] : 2.0 * (s - target[k]);
    grad.segment(k * width, model.input_dim) = residual * input;
    if (model.hyper.fit_intercept) grad[k * width + model.input_dim] = residual;
  }
  return grad;
}

// Sum of per-example losses plus the family regularizer.
inline double total_loss(const Model& model, const SampleSet& data) {
  double loss = 0.0;
  if (is_linear_head(model.family) && !data.empty()) {
    detail::check_input(model, data.inputs.cols());
    detail::check_target(model, data.targets.cols());
    const Eigen::MatrixXd xa = detail::augmented(model, data.inputs);
    const Eigen::MatrixXd scores = xa * detail::head_matrix(model).transpose();
    if (model.family == ModelFamily::kLogistic) {
      loss = scores.unaryExpr([](double s) { return detail::softplus(s); }).sum() -
             scores.cwiseProduct(data.targets).sum();
    } else {
      loss = (scores - data.targets).squaredNorm();
    }
  } else {
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const Eigen::VectorXd x = data.inputs.row(i).transpose();
      const Eigen::VectorXd y = data.targets.row(i).transpose();
      loss += example_loss(model, x, y);
    }
  }
  return loss + 0.5 * detail::regularizer_scale(model) * model.parameters.squaredNorm();
}

// Gradient of total_loss.
inline GradientVector total_gradient(const Model& model, const SampleSet& data) {
  GradientVector grad = detail::regularizer_scale(model) * model.parameters;
  if (data.empty()) return grad;
  detail::check_input(model, data.inputs.cols());
  if (is_linear_head(model.family)) {
    detail::check_target(model, data.targets.cols());
    const Eigen::MatrixXd xa = detail::augmented(model, data.inputs);
    Eigen::MatrixXd residual = xa * detail::head_matrix(model).transpose();
    if (model.family == ModelFamily::kLogistic) {
      residual = residual.unaryExpr([](double s) { return detail::sigmoid(s); }) - data.targets;
    } else {
      residual = 2.0 * (residual - data.targets);
    }
    // Row-major head layout: row k of (residual^T xa) is output k's gradient.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> g =
        residual.transpose() * xa;
    grad += Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    return grad;
  }
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd x = data.inputs.row(i).transpose();
    detail::autoencoder_grad(model, model.parameters.data(), x.data(), grad.data());
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Hessian

struct HessianOptions {
  Eigen::Index dense_threshold = 512;  // dense matrix when p <= threshold
};

// Symmetric operator H + damping * I. Dense matrices already include the
// damping on their diagonal.
class HessianOperator {
 public:
  using MatVec = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  static HessianOperator dense(Eigen::MatrixXd matrix, double damping = 0.0) {
    HessianOperator op;
    op.dim_ = matrix.rows();
    op.damping_ = damping;
    matrix.diagonal().array() += damping;
    op.dense_ = std::move(matrix);
    return op;
  }

  // `undamped` computes H v; damping is added on application.
  static HessianOperator matvec(Eigen::Index dim, MatVec undamped, double damping = 0.0) {
    HessianOperator op;
    op.dim_ = dim;
    op.damping_ = damping;
    op.matvec_ = std::move(undamped);
    return op;
  }

  Eigen::Index dim() const { return dim_; }
  double damping() const { return damping_; }
  bool is_dense() const { return dense_.has_value(); }
  const Eigen::MatrixXd& matrix() const { return *dense_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    if (v.size() != dim_) throw DimensionMismatch("HessianOperator: vector dimension mismatch");
    if (dense_) return (*dense_) * v;
    return matvec_(v) + damping_ * v;
  }

  // Materializes the operator column by column when it is matrix-free.
  Eigen::MatrixXd to_dense() const {
    if (dense_) return *dense_;
    Eigen::MatrixXd out(dim_, dim_);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim_);
    for (Eigen::Index j = 0; j < dim_; ++j) {
      e[j] = 1.0;
      out.col(j) = apply(e);
      e[j] = 0.0;
    }
    return out;
  }

 private:
  Eigen::Index dim_ = 0;
  double damping_ = 0.0;
  std::optional<Eigen::MatrixXd> dense_;
  MatVec matvec_;
};

namespace detail {

// Per-output curvature weights for a linear head: 2 for squared loss,
// sigma (1 - sigma) for logistic. Column k belongs to output k.
inline Eigen::MatrixXd head_curvature(const Model& model, const Eigen::MatrixXd& xa) {
  const Eigen::Index n = xa.rows();
  if (model.family != ModelFamily::kLogistic) return Eigen::MatrixXd::Constant(n, model.output_dim, 2.0);
  Eigen::MatrixXd s = xa * head_matrix(model).transpose();
  return s.unaryExpr([](double v) {
    const double p = sigmoid(v);
    return p * (1.0 - p);
  });
}

inline Eigen::VectorXd autoencoder_hvp(const Model& model, const SampleSet& data,
                                       const Eigen::VectorXd& v) {
  const Eigen::Index p = model.parameters.size();
  std::vector<Dual> params(p);
  for (Eigen::Index i = 0; i < p; ++i) params[i] = Dual(model.parameters[i], v[i]);
  std::vector<Dual> grad(p);
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    const Eigen::VectorXd x = data.inputs.row(r).transpose();
    autoencoder_grad(model, params.data(), x.data(), grad.data());
  }
  Eigen::VectorXd out(p);
  for (Eigen::Index i = 0; i < p; ++i) out[i] = grad[i].d;
  return out + regularizer_scale(model) * v;
}

}  // namespace detail

// Hessian of total_loss at the model's parameters over `data`, plus
// damping * I. Dense when the parameter count is at most the threshold.
inline HessianOperator hessian(const Model& model, const SampleSet& data, double damping,
                               HessianOptions options = {}) {
  detail::require(damping >= 0.0, "hessian: damping must be >= 0");
  model.validate();
  if (!data.empty()) detail::check_input(model, data.inputs.cols());
  const Eigen::Index p = model.parameters.size();
  const double reg = detail::regularizer_scale(model);

  if (is_linear_head(model.family)) {
    const Eigen::Index width = model.head_width();
    auto xa = std::make_shared<Eigen::MatrixXd>(
        data.empty() ? Eigen::MatrixXd(0, width) : detail::augmented(model, data.inputs));
    auto curvature = std::make_shared<Eigen::MatrixXd>(
        data.empty() ? Eigen::MatrixXd(0, model.output_dim) : detail::head_curvature(model, *xa));
    if (p <= options.dense_threshold) {
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
      for (int k = 0; k < model.output_dim; ++k) {
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(width, width);
        if (xa->rows() > 0) {
          const Eigen::MatrixXd weighted =
              xa->array().colwise() * curvature->col(k).array().sqrt();
          block.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
          block.triangularView<Eigen::StrictlyUpper>() = block.transpose();
        }
        block.diagonal().array() += reg;
        h.block(k * width, k * width, width, width) = block;
      }
      return HessianOperator::dense(std::move(h), damping);
    }
    const int outputs = model.output_dim;
    return HessianOperator::matvec(
        p,
        [xa, curvature, width, outputs, reg](const Eigen::VectorXd& v) {
          Eigen::VectorXd out = reg * v;
          for (int k = 0; k < outputs; ++k) {
            const auto vk = v.segment(k * width, width);
            if (xa->rows() > 0) {
              const Eigen::VectorXd xv = ((*xa) * vk).cwiseProduct(curvature->col(k));
              out.segment(k * width, width).noalias() += xa->transpose() * xv;
            }
          }
          return out;
        },
        damping);
  }

  auto captured_model = std::make_shared<Model>(model);
  auto captured_data = std::make_shared<SampleSet>(data);
  HessianOperator op = HessianOperator::matvec(
      p,
      [captured_model, captured_data](const Eigen::VectorXd& v) {
        return detail::autoencoder_hvp(*captured_model, *captured_data, v);
      },
      damping);
  if (p <= options.dense_threshold) {
    Eigen::MatrixXd h = op.to_dense();
    h.diagonal().array() -= damping;
    h = 0.5 * (h + h.transpose()).eval();
    return HessianOperator::dense(std::move(h), damping);
  }
  return op;
}

// ---------------------------------------------------------------------------
// Forward maps

// Logits of a linear head.
inline Eigen::VectorXd head_logits(const Model& model, const Eigen::VectorXd& input) {
  if (!is_linear_head(model.family)) throw InvalidArgument("head_logits: model is not a linear head");
  detail::check_input(model, input.size());
  const auto w = detail::head_matrix(model);
  Eigen::VectorXd s = w.leftCols(model.input_dim) * input;
  if (model.hyper.fit_intercept) s += w.col(model.input_dim);
  return s;
}

// d logit_k / d input, for a linear head this is the k-th weight row.
inline Eigen::VectorXd logit_input_gradient(const Model& model, const Eigen::VectorXd& input, int k) {
  if (!is_linear_head(model.family)) {
    throw InvalidArgument("logit_input_gradient: model is not a linear head");
  }
  detail::check_input(model, input.size());
  if (k < 0 || k >= model.output_dim) throw InvalidArgument("logit_input_gradient: output out of range");
  return detail::head_matrix(model).row(k).head(model.input_dim).transpose();
}

inline Eigen::VectorXd classify_attributes(const Model& classifier, const Eigen::VectorXd& input) {
  if (classifier.family != ModelFamily::kLogistic) {
    throw InvalidArgument("classify_attributes: classifier must be logistic");
  }
  return head_logits(classifier, input).unaryExpr([](double s) { return detail::sigmoid(s); });
}

inline Eigen::VectorXd encode(const Model& autoencoder, const Eigen::VectorXd& input) {
  if (!is_autoencoder(autoencoder.family)) throw InvalidArgument("encode: model is not an autoencoder");
  detail::check_input(autoencoder, input.size());
  const double* p = autoencoder.parameters.data();
  std::vector<double> z, tmp;
  if (autoencoder.family == ModelFamily::kLinearAutoencoder) {
    detail::linear_ae_forward(autoencoder, p, input.data(), z, tmp);
  } else {
    detail::mlp_encode(autoencoder, p, input.data(), tmp, z);
  }
  return Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
}

inline Eigen::VectorXd encode(const Model& autoencoder, const ImageTensor& image) {
  return encode(autoencoder, image.pixels);
}

// Decoder output before clamping.
inline Eigen::VectorXd decode_raw(const Model& autoencoder, const Eigen::VectorXd& z) {
  if (!is_autoencoder(autoencoder.family)) throw InvalidArgument("decode: model is not an autoencoder");
  if (z.size() != autoencoder.hyper.latent_dim) {
    throw DimensionMismatch("decode: latent has dimension " + std::to_string(z.size()) +
                            ", model expects " + std::to_string(autoencoder.hyper.latent_dim));
  }
  const int in = autoencoder.input_dim, d = autoencoder.hyper.latent_dim;
  const double* p = autoencoder.parameters.data();
  if (autoencoder.family == ModelFamily::kLinearAutoencoder) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> enc(p, d, in);
    Eigen::Map<const Eigen::VectorXd> bias(p + static_cast<std::ptrdiff_t>(d) * in, in);
    return enc.transpose() * z + bias;
  }
  std::vector<double> h3, out;
  detail::mlp_decode(autoencoder, p, z.data(), h3, out);
  return Eigen::Map<Eigen::VectorXd>(out.data(), in);
}

inline ImageTensor decode(const Model& autoencoder, const Eigen::VectorXd& z, int height, int width) {
  if (Eigen::Index{height} * width != autoencoder.input_dim) {
    throw DimensionMismatch("decode: image shape does not match autoencoder input dimension");
  }
  return {height, width, decode_raw(autoencoder, z).cwiseMax(0.0).cwiseMin(1.0)};
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  double learning_rate = 0.01;  // mlp_autoencoder SGD step
  int epochs = 100;             // SGD epochs, or Newton iteration budget
  int batch_size = 32;
  std::uint64_t seed = 0;
  double gradient_tolerance = 1e-6;
  std::optional<Eigen::VectorXd> initial_parameters;  // warm start (logistic / mlp)
};

struct TrainResult {
  Model model;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = true;
};

namespace detail {

inline void check_training_data(const Model& spec, const SampleSet& data) {
  detail::require(!data.empty(), "train: dataset is empty");
  check_input(spec, data.inputs.cols());
  check_target(spec, data.targets.cols());
  if (data.targets.rows() != data.inputs.rows() && is_linear_head(spec.family)) {
    throw DimensionMismatch("train: inputs and targets have different row counts");
  }
}

// Closed-form minimizer of sum (w.x - y)^2 + lambda |w|^2 per output.
inline TrainResult train_quadratic(Model model, const SampleSet& data) {
  const Eigen::MatrixXd xa = augmented(model, data.inputs);
  Eigen::MatrixXd gram = xa.transpose() * xa;
  gram.diagonal().array() += model.hyper.lambda;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const double scale = std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-13 * scale) {
    throw NumericalError("train: singular normal equations (add ridge regularization)");
  }
  const Eigen::MatrixXd w = ldlt.solve(xa.transpose() * data.targets);  // width x outputs
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = w.transpose();
  model.parameters = Eigen::Map<const Eigen::VectorXd>(rows.data(), rows.size());
  TrainResult result{model, 1, 0.0, true};
  result.gradient_norm = total_gradient(result.model, data).norm();
  return result;
}

// Damped Newton with Armijo backtracking.
inline TrainResult train_logistic(Model model, const SampleSet& data, const TrainOptions& options) {
  if (options.initial_parameters) {
    if (options.initial_parameters->size() != model.parameters.size()) {
      throw DimensionMismatch("train: initial parameter count mismatch");
    }
    model.parameters = *options.initial_parameters;
  }
  TrainResult result{model, 0, 0.0, false};
  Eigen::VectorXd grad = total_gradient(result.model, data);
  double loss = total_loss(result.model, data);
  for (int it = 0; it < options.epochs; ++it) {
    result.gradient_norm = grad.norm();
    if (result.gradient_norm <= options.gradient_tolerance) {
      result.converged = true;
      return result;
    }
    const HessianOperator h = hessian(result.model, data, 1e-12);
    Eigen::VectorXd step;
    if (h.is_dense()) {
      const Eigen::LLT<Eigen::MatrixXd> llt(h.matrix());
      if (llt.info() != Eigen::Success) throw NumericalError("train: Newton system is not positive definite");
      step = llt.solve(-grad);
    } else {
      // Truncated Newton: a few CG iterations on H s = -g.
      step = Eigen::VectorXd::Zero(grad.size());
      Eigen::VectorXd r = -grad, d = r;
      double rr = r.squaredNorm();
      for (int cg = 0; cg < 200 && std::sqrt(rr) > 1e-3 * result.gradient_norm; ++cg) {
        const Eigen::VectorXd hd = h.apply(d);
        const double a = rr / d.dot(hd);
        step += a * d;
        r -= a * hd;
        const double rr_new = r.squaredNorm();
        d = r + (rr_new / rr) * d;
        rr = rr_new;
      }
    }
    const double slope = grad.dot(step);
    double t = 1.0;
    Model trial = result.model;
    for (int ls = 0; ls < 60; ++ls) {
      trial.parameters = result.model.parameters + t * step;
      const double trial_loss = total_loss(trial, data);
      if (trial_loss <= loss + 1e-4 * t * slope) {
        loss = trial_loss;
        break;
      }
      // Near the optimum the decrease falls below the rounding error of the
      // summed loss; take the full step if it shrinks the gradient instead.
      if (ls == 0 && total_gradient(trial, data).norm() < result.gradient_norm) {
        loss = trial_loss;
        break;
      }
      t *= 0.5;
    }
    if (trial.parameters == result.model.parameters) break;  // no progress possible
    result.model = std::move(trial);
    grad = total_gradient(result.model, data);
    result.iterations = it + 1;
  }
  result.gradient_norm = grad.norm();
  result.converged = result.gradient_norm <= options.gradient_tolerance;
  return result;
}

// Tied-weight linear autoencoder: the reconstruction optimum is the top
// latent_dim principal subspace of the centered data, with bias = mean.
inline TrainResult train_linear_autoencoder(Model model, const SampleSet& data) {
  const int in = model.input_dim, d = model.hyper.latent_dim;
  detail::require(d <= in, "train: latent_dim must not exceed input_dim");
  const Eigen::VectorXd mean = data.inputs.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.inputs.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(data.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("train: eigen-decomposition failed");
  // Eigenvalues ascend; take the last d eigenvectors, largest first.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> enc(d, in);
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd v = eig.eigenvectors().col(in - 1 - j);
    // Sign convention: largest-magnitude entry positive, for reproducibility.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    enc.row(j) = v.transpose();
  }
  model.parameters.head(static_cast<Eigen::Index>(d) * in) =
      Eigen::Map<const Eigen::VectorXd>(enc.data(), enc.size());
  model.parameters.tail(in) = mean;
  TrainResult result{model, 1, 0.0, true};
  result.gradient_norm = total_gradient(result.model, data).norm() / static_cast<double>(data.size());
  return result;
}

inline TrainResult train_mlp_autoencoder(Model model, const SampleSet& data, const TrainOptions& options) {
  detail::require(options.learning_rate > 0.0, "train: learning_rate must be > 0");
  detail::require(options.batch_size >= 1, "train: batch_size must be >= 1");
  CounterRng rng(options.seed, 0x1417);
  if (options.initial_parameters) {
    if (options.initial_parameters->size() != model.parameters.size()) {
      throw DimensionMismatch("train: initial parameter count mismatch");
    }
    model.parameters = *options.initial_parameters;
  } else {
    const MlpLayout L(model);
    const int in = model.input_dim, d = model.hyper.latent_dim, h = model.hyper.hidden_dim;
    auto init = [&](std::ptrdiff_t offset, int rows, int cols) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
      for (std::ptrdiff_t i = 0; i < std::ptrdiff_t{rows} * cols; ++i) {
        model.parameters[offset + i] = scale * rng.normal();
      }
    };
    init(L.w1, h, in);
    init(L.w2, d, h);
    init(L.w3, h, d);
    init(L.w4, in, h);
    model.parameters.segment(L.b4, in) = data.inputs.colwise().mean().transpose();
  }
  const Eigen::Index n = data.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double reg = regularizer_scale(model);
  TrainResult result{model, 0, 0.0, true};
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    for (Eigen::Index start = 0; start < n; start += options.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(n, start + options.batch_size);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameters.size());
      for (Eigen::Index b = start; b < stop; ++b) {
        const Eigen::VectorXd x = data.inputs.row(order[b]).transpose();
        autoencoder_grad(result.model, result.model.parameters.data(), x.data(), grad.data());
      }
      grad /= static_cast<double>(stop - start);
      grad += reg * result.model.parameters / static_cast<double>(n);
      result.model.parameters -= options.learning_rate * grad;
    }
    result.iterations = epoch + 1;
  }
  result.gradient_norm = total_gradient(result.model, data).norm() / static_cast<double>(n);
  result.converged = result.gradient_norm <= options.gradient_tolerance;
  return result;
}

}  // namespace detail

// Fits `spec` (family, hyper and dimensions; parameters ignored) to `data`.
// Least squares / ridge and the linear autoencoder are solved exactly;
// logistic heads run Newton's method until the gradient norm reaches
// options.gradient_tolerance or options.epochs iterations elapse; the MLP
// autoencoder runs minibatch SGD.
inline TrainResult train(const Model& spec, const SampleSet& data, const TrainOptions& options = {}) {
  Model model = Model::make(spec.family, spec.input_dim, spec.output_dim, spec.hyper);
  detail::check_training_data(model, data);
  switch (model.family) {
    case ModelFamily::kLeastSquares:
    case ModelFamily::kRidge:
      return detail::train_quadratic(std::move(model), data);
    case ModelFamily::kLogistic:
      return detail::train_logistic(std::move(model), data, options);
    case ModelFamily::kLinearAutoencoder:
      return detail::train_linear_autoencoder(std::move(model), data);
    case ModelFamily::kMlpAutoencoder:
      return detail::train_mlp_autoencoder(std::move(model), data, options);
  }
  throw InvalidArgument("train: unknown family");
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all integers and floats little-endian):
//   bytes 0-7    magic "LDPMODEL"
//   u32          format version (1)
//   u32          family tag (ModelFamily value)
//   u32          input_dim
//   u32          output_dim
//   u32          latent_dim
//   u32          hidden_dim
//   u32          fit_intercept (0 or 1)
//   u32          reserved (0)
//   f64          lambda
//   u64          parameter count p
//   f64[p]       parameters

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& offset) {
  if (offset + sizeof(T) > in.size()) throw CorruptData("checkpoint: truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  offset += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidArgument("write failed: " + path);
}

}  // namespace detail

inline std::string serialize_model(const Model& model) {
  model.validate();
  std::string out = "LDPMODEL";
  detail::put_le<std::uint32_t>(out, 1);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.family));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.output_dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hyper.latent_dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hyper.hidden_dim));
  detail::put_le<std::uint32_t>(out, model.hyper.fit_intercept ? 1u : 0u);
  detail::put_le<std::uint32_t>(out, 0);
  detail::put_le<double>(out, model.hyper.lambda);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.parameters.size()));
  for (Eigen::Index i = 0; i < model.parameters.size(); ++i) detail::put_le<double>(out, model.parameters[i]);
  return out;
}

inline Model deserialize_model(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, "LDPMODEL") != 0) throw CorruptData("checkpoint: bad magic");
  std::size_t off = 8;
  if (detail::get_le<std::uint32_t>(bytes, off) != 1) throw CorruptData("checkpoint: unsupported version");
  const auto tag = detail::get_le<std::uint32_t>(bytes, off);
  if (tag > static_cast<std::uint32_t>(ModelFamily::kMlpAutoencoder)) throw CorruptData("checkpoint: bad family");
  Model m;
  m.family = static_cast<ModelFamily>(tag);
  m.input_dim = static_cast<int>(detail::get_le<std::uint32_t>(bytes, off));
  m.output_dim = static_cast<int>(detail::get_le<std::uint32_t>(bytes, off));
  m.hyper.latent_dim = static_cast<int>(detail::get_le<std::uint32_t>(bytes, off));
  m.hyper.hidden_dim = static_cast<int>(detail::get_le<std::uint32_t>(bytes, off));
  m.hyper.fit_intercept = detail::get_le<std::uint32_t>(bytes, off) != 0;
  detail::get_le<std::uint32_t>(bytes, off);
  m.hyper.lambda = detail::get_le<double>(bytes, off);
  const auto count = detail::get_le<std::uint64_t>(bytes, off);
  if (count > (bytes.size() - off) / 8) throw CorruptData("checkpoint: truncated parameters");
  m.parameters.resize(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < m.parameters.size(); ++i) m.parameters[i] = detail::get_le<double>(bytes, off);
  if (off != bytes.size()) throw CorruptData("checkpoint: trailing bytes");
  try {
    m.validate();
  } catch (const Error& e) {
    throw CorruptData(std::string("checkpoint: ") + e.what());
  }
  return m;
}

inline void save_model(const Model& model, const std::string& path) {
  detail::write_file(path, serialize_model(model));
}

inline Model load_model(const std::string& path) { return deserialize_model(detail::read_file(path)); }

}  // namespace latentdp
