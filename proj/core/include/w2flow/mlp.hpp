#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "w2flow/measures.hpp"

namespace w2flow {

enum class Activation { Identity, Relu, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Flat parameter-space vector, laid out layer by layer as W (row-major,
/// out x in) followed by b.
using GradientVector = Vector;

/// Fully connected feedforward network. Hidden layers use one activation,
/// the output layer is affine. Batches are row-per-sample.
///
/// relu'(0) is taken as 0 so input gradients are reproducible at kinks.
class Mlp {
 public:
  struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
  };

  /// All parameters zero. Needs at least two layer sizes, all positive.
  Mlp(std::vector<int> layer_sizes, Activation hidden);

  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  Activation activation() const noexcept { return activation_; }
  int input_dim() const noexcept { return sizes_.front(); }
  int output_dim() const noexcept { return sizes_.back(); }
  Eigen::Index parameter_count() const noexcept;

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Vector parameters() const;
  void set_parameters(const Vector& flat);

  Matrix forward(const Matrix& batch) const;

  /// Reverse accumulation: given dL/d(output) per sample, returns dL/d(params)
  /// and dL/d(input) per sample.
  struct Gradients {
    GradientVector params;
    Matrix inputs;
  };
  Gradients backward(const Matrix& batch, const Matrix& output_grad) const;

 private:
  struct Trace {
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // post[0] is the input
  };
  Trace run(const Matrix& batch) const;
  void check_input(const Matrix& batch) const;

  std::vector<int> sizes_;
  Activation activation_;
  std::vector<Layer> layers_;
};

/// Weights i.i.d. uniform in [-init_scale / sqrt(fan_in), +init_scale / sqrt(fan_in)], biases zero.
Mlp mlp_new(std::vector<int> layer_sizes, Activation hidden, std::uint64_t seed, double init_scale = 1.0);

inline Matrix forward(const Mlp& net, const Matrix& batch) { return net.forward(batch); }

struct LossAndGrad {
  double value = 0.0;
  GradientVector grad;
};

/// (1/m) sum_i |targets_i - net(inputs_i)|^2 and its parameter gradient.
LossAndGrad mse_loss_grad(const Mlp& net, const Matrix& inputs, const Matrix& targets);

/// value = (1/m) sum_i net(x_i) for a scalar net; grad is d(sign * value)/d(params).
LossAndGrad scalar_head_grad(const Mlp& net, const Matrix& inputs, double sign = 1.0);

/// Gradient of a scalar net with respect to its input at x.
Vector input_gradient(const Mlp& net, const Vector& x);

/// Row i is the input gradient of a scalar net at inputs row i.
Matrix input_gradients(const Mlp& net, const Matrix& inputs);

/// params - lr * grad. Throws on a non-finite gradient or a negative lr.
Mlp sgd_step(const Mlp& net, const GradientVector& grad, double lr);

/// params + lr * grad, for the potential networks.
Mlp ascent_step(const Mlp& net, const GradientVector& grad, double lr);

/// Called before every sub-iteration of persistent_fit with the (frozen) targets.
using FitObserver = std::function<void(int iteration, double loss, const Matrix& targets)>;

struct FitResult {
  Mlp net;
  std::vector<double> losses;
};

/// K successive MSE descent steps on one fixed (inputs, targets) pair.
/// losses[k] is the loss before step k.
FitResult persistent_fit(Mlp net, const Matrix& inputs, const Matrix& targets, int k_steps, double lr,
                         const FitObserver& observer = {});

/// Writes the flat parameter vector as little-endian float64 to `path` and a
/// JSON sidecar {layer_sizes, activation, seed} to `path + ".json"`.
void save_checkpoint(const Mlp& net, const std::string& path, std::uint64_t seed);

struct Checkpoint {
  Mlp net;
  std::uint64_t seed;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace w2flow
