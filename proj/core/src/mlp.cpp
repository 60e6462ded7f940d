#include "w2flow/mlp.hpp"

#include <cmath>

#include "w2flow/random.hpp"

namespace w2flow {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw Error("unknown activation '" + name + "'");
}

namespace {

Matrix activate(const Matrix& z, Activation a) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::Relu: return z.cwiseMax(0.0);
    case Activation::Tanh: return z.array().tanh().matrix();
  }
  return z;
}

// Derivative expressed through the pre-activation z and the output y = act(z).
Matrix activation_slope(const Matrix& z, const Matrix& y, Activation a) {
  switch (a) {
    case Activation::Identity: return Matrix::Ones(z.rows(), z.cols());
    case Activation::Relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh: return (1.0 - y.array().square()).matrix();
  }
  return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes, Activation hidden) : sizes_(std::move(layer_sizes)), activation_(hidden) {
  if (sizes_.size() < 2) throw Error("an MLP needs at least an input and an output layer");
  for (const int s : sizes_)
    if (s < 1) throw Error("MLP layer sizes must be positive");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
    layers_.push_back({Matrix::Zero(sizes_[l + 1], sizes_[l]), Vector::Zero(sizes_[l + 1])});
}

Eigen::Index Mlp::parameter_count() const noexcept {
  Eigen::Index count = 0;
  for (const Layer& layer : layers_) count += layer.weight.size() + layer.bias.size();
  return count;
}

Vector Mlp::parameters() const {
  Vector flat(parameter_count());
  Eigen::Index k = 0;
  for (const Layer& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) flat[k++] = layer.weight(r, c);
    flat.segment(k, layer.bias.size()) = layer.bias;
    k += layer.bias.size();
  }
  return flat;
}

void Mlp::set_parameters(const Vector& flat) {
  if (flat.size() != parameter_count())
    throw Error("parameter vector has length " + std::to_string(flat.size()) + ", expected " +
                std::to_string(parameter_count()));
  if (!flat.allFinite()) throw Error("parameters must be finite");
  Eigen::Index k = 0;
  for (Layer& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[k++];
    layer.bias = flat.segment(k, layer.bias.size());
    k += layer.bias.size();
  }
}

void Mlp::check_input(const Matrix& batch) const {
  if (batch.cols() != input_dim())
    throw Error("input has " + std::to_string(batch.cols()) + " columns, network expects " +
                std::to_string(input_dim()));
}

Mlp::Trace Mlp::run(const Matrix& batch) const {
  check_input(batch);
  Trace trace;
  trace.post.push_back(batch);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = trace.post.back() * layers_[l].weight.transpose();
    z.rowwise() += layers_[l].bias.transpose();
    const bool last = l + 1 == layers_.size();
    Matrix y = last ? z : activate(z, activation_);
    trace.pre.push_back(std::move(z));
    trace.post.push_back(std::move(y));
  }
  return trace;
}

Matrix Mlp::forward(const Matrix& batch) const { return run(batch).post.back(); }

Mlp::Gradients Mlp::backward(const Matrix& batch, const Matrix& output_grad) const {
  Trace trace = run(batch);
  if (output_grad.rows() != batch.rows() || output_grad.cols() != output_dim())
    throw Error("output gradient shape does not match network output");

  std::vector<Layer> grads(layers_.size());
  Matrix delta = output_grad;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    grads[l].weight = delta.transpose() * trace.post[l];
    grads[l].bias = delta.colwise().sum().transpose();
    delta = delta * layers_[l].weight;
    if (l > 0) delta.array() *= activation_slope(trace.pre[l - 1], trace.post[l], activation_).array();
  }

  Gradients out;
  out.params.resize(parameter_count());
  Eigen::Index k = 0;
  for (const Layer& g : grads) {
    for (Eigen::Index r = 0; r < g.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < g.weight.cols(); ++c) out.params[k++] = g.weight(r, c);
    out.params.segment(k, g.bias.size()) = g.bias;
    k += g.bias.size();
  }
  out.inputs = std::move(delta);
  return out;
}

Mlp mlp_new(std::vector<int> layer_sizes, Activation hidden, std::uint64_t seed, double init_scale) {
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw Error("init_scale must be finite and non-negative");
  Mlp net(std::move(layer_sizes), hidden);
  Rng rng(seed);
  for (Mlp::Layer& layer : net.layers()) {
    const double bound = init_scale / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
  }
  return net;
}

LossAndGrad mse_loss_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets) {
  if (targets.rows() != inputs.rows() || targets.cols() != net.output_dim())
    throw Error("mse targets shape does not match network output");
  if (inputs.rows() == 0) throw Error("mse needs a non-empty batch");
  const double m = static_cast<double>(inputs.rows());
  const Matrix residual = targets - net.forward(inputs);
  LossAndGrad out;
  out.value = residual.squaredNorm() / m;
  out.grad = net.backward(inputs, (-2.0 / m) * residual).params;
  return out;
}

LossAndGrad scalar_head_grad(const Mlp& net, const Matrix& inputs, double sign) {
  if (net.output_dim() != 1) throw Error("scalar head needs a network with one output");
  if (inputs.rows() == 0) throw Error("scalar head needs a non-empty batch");
  const double m = static_cast<double>(inputs.rows());
  LossAndGrad out;
  out.value = net.forward(inputs).sum() / m;
  out.grad = net.backward(inputs, Matrix::Constant(inputs.rows(), 1, sign / m)).params;
  return out;
}

Matrix input_gradients(const Mlp& net, const Matrix& inputs) {
  if (net.output_dim() != 1) throw Error("input gradient needs a network with one output");
  return net.backward(inputs, Matrix::Ones(inputs.rows(), 1)).inputs;
}

Vector input_gradient(const Mlp& net, const Vector& x) {
  return input_gradients(net, x.transpose()).row(0).transpose();
}

namespace {

Mlp step(const Mlp& net, const GradientVector& grad, double lr, double direction) {
  if (grad.size() != net.parameter_count()) throw Error("gradient length does not match parameter count");
  if (!grad.allFinite()) throw Error("non-finite gradient");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("learning rate must be finite and non-negative");
  Mlp out = net;
  out.set_parameters(net.parameters() + (direction * lr) * grad);
  return out;
}

}  // namespace

Mlp sgd_step(const Mlp& net, const GradientVector& grad, double lr) { return step(net, grad, lr, -1.0); }

Mlp ascent_step(const Mlp& net, const GradientVector& grad, double lr) { return step(net, grad, lr, 1.0); }

FitResult persistent_fit(Mlp net, const Matrix& inputs, const Matrix& targets, int k_steps, double lr,
                         const FitObserver& observer) {
  if (k_steps < 1) throw Error("persistent_fit needs K >= 1");
  FitResult out{std::move(net), {}};
  out.losses.reserve(static_cast<std::size_t>(k_steps));
  for (int k = 0; k < k_steps; ++k) {
    const LossAndGrad lg = mse_loss_grad(out.net, inputs, targets);
    if (observer) observer(k, lg.value, targets);
    out.losses.push_back(lg.value);
    out.net = sgd_step(out.net, lg.grad, lr);
  }
  return out;
}

}  // namespace w2flow
