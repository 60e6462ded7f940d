#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "w2flow/measures.hpp"
#include "w2flow/mlp.hpp"
#include "w2flow/random.hpp"

namespace w2flow {

/// Where the Kantorovich potential gradient comes from during training.
enum class PotentialSource {
  /// phi_w / psi_v networks trained by ascent on L_D.
  Neural,
  /// Exact minibatch assignment; no potential networks are trained.
  ExactOt,
};

enum class GeneratorMode {
  /// G_theta is an MLP fitted to the Euler targets.
  Network,
  /// The generator is an explicit particle buffer overwritten by the targets,
  /// i.e. a perfect fit. Reduces training to the particle Euler scheme.
  DirectParticle,
};

std::string to_string(PotentialSource s);
PotentialSource potential_source_from_string(const std::string& s);
std::string to_string(GeneratorMode g);
GeneratorMode generator_mode_from_string(const std::string& s);

struct Architectures {
  std::vector<int> generator{2, 32, 32, 2};
  std::vector<int> potential{2, 32, 32, 1};
  Activation activation = Activation::Tanh;
  double init_scale = 1.0;
};

struct TrainConfig {
  int m = 64;
  double gamma_g = 0.05;
  double gamma_d = 1e-3;
  double lambda = 1.0;
  double delta_t = 0.1;
  int K = 1;
  int epochs = 100;
  int d_updates_per_epoch = 5;
  PotentialSource potential_backend = PotentialSource::ExactOt;
  GeneratorMode generator_mode = GeneratorMode::Network;
  std::uint64_t seed = 0;
  Architectures arch;
  /// Size of the fixed evaluation batches; capped at the data size.
  int eval_size = 256;

  /// Throws Error naming the first invalid field.
  void validate() const;
};

/// One row of the metrics stream. Epoch 0 is the state before training.
struct MetricsRecord {
  int epoch = 0;
  /// Cumulative training time in milliseconds, evaluation excluded.
  double wall_ms = 0.0;
  double w1_loss = 0.0;
  double w2_loss = 0.0;
  std::uint64_t seed = 0;
  int K = 0;
  /// Set on the final record when training stopped on a non-finite value.
  std::optional<std::string> abort_reason;
};

/// Draws `count` latent or data points; the result has one sample per row.
using Sampler = std::function<Matrix(Eigen::Index count, Rng& rng)>;

Sampler gaussian_sampler(GaussianSpec spec);

/// Finite point set. A request for all N points returns them in stored order,
/// smaller requests sample without replacement.
Sampler empirical_sampler(Matrix points);

struct DiscriminatorLoss {
  double value = 0.0;
  /// Gradients of L_D (ascent directions) for phi_w and psi_v.
  GradientVector grad_phi;
  GradientVector grad_psi;
  /// Number of samples whose hinge slack was strictly positive.
  int active = 0;
};

/// L_D = (1/m) sum_i [phi(y_i) + psi(x_i) - lambda (phi(y_i) + psi(x_i) - |y_i - x_i|^2 / 2)_+]
/// with generated y_i paired index-wise with data x_i.
DiscriminatorLoss discriminator_loss(const Mlp& phi, const Mlp& psi, const Matrix& gen_batch,
                                     const Matrix& data_batch, double lambda);

/// Row i is y_i - x_sigma(i) for the exact assignment of the generated batch to the data batch.
Matrix exact_potential_gradients(const Matrix& gen_batch, const Matrix& data_batch);

/// zeta_i = y_i - delta_t * g_i
Matrix make_targets(const Matrix& gen_points, const Matrix& grad_phi, double delta_t);

/// K descent steps of (1/m) sum_i |zeta_i - G(z_i)|^2 with step gamma_g on frozen targets.
FitResult generator_update_w2fe(const Mlp& generator, const Matrix& z_batch, const Matrix& targets, int K,
                                double gamma_g, const FitObserver& observer = {});

/// Gradient of (1/m) sum_i phi(G(z_i)) with respect to the generator parameters.
GradientVector composed_potential_grad(const Mlp& generator, const Matrix& z_batch, const Mlp& phi);

/// One step theta <- theta - lr * grad_theta (1/m) sum_i phi(G_theta(z_i)).
Mlp generator_update_w2gan(const Mlp& generator, const Matrix& z_batch, const Mlp& phi, double lr);

/// Max absolute parameter difference between K W2-FE steps at rate gamma_g
/// (targets built once from G0 and phi) and K W2-GAN steps at rate 2 delta_t gamma_g.
/// Zero up to rounding for K = 1.
double equivalence_residual(const Mlp& g0, const Mlp& phi, const Matrix& z_batch, double gamma_g, double delta_t,
                            int K = 1);

/// Diagnostics of a single epoch.
struct EpochTrace {
  /// L_D after each discriminator step (neural backend only).
  std::vector<double> discriminator_values;
  /// MSE before each of the K generator steps.
  std::vector<double> fit_losses;
  /// Checksum of the targets seen by each generator sub-iteration.
  std::vector<std::uint64_t> target_checksums;
  /// How many times targets were generated this epoch.
  int target_generations = 0;
};

/// Bitwise FNV-1a over the matrix entries.
std::uint64_t matrix_checksum(const Matrix& m);

/// Stateful W2-FE training loop. Fully determined by (config, prior, data).
class W2feTrainer {
 public:
  W2feTrainer(TrainConfig config, Sampler prior, ParticleCloud data);

  EpochTrace run_epoch();

  /// Exact W1 and W2 between the fixed evaluation batch of generated points
  /// and the fixed evaluation subset of the data.
  MetricsRecord evaluate(int epoch, double wall_ms) const;

  const TrainConfig& config() const noexcept { return config_; }
  const Mlp& generator() const noexcept { return generator_; }
  const Mlp& phi() const noexcept { return phi_; }
  const Mlp& psi() const noexcept { return psi_; }
  /// Particle buffer in DirectParticle mode (empty otherwise).
  const Matrix& particles() const noexcept { return particles_; }
  int epochs_done() const noexcept { return epochs_done_; }

  /// Generated points for the given latent batch (the buffer itself in DirectParticle mode).
  Matrix generate(const Matrix& z) const;

 private:
  Matrix sample_data(Eigen::Index count);
  Matrix potential_gradients(const Matrix& gen, const Matrix& data) const;

  TrainConfig config_;
  Sampler prior_;
  ParticleCloud data_;
  Rng rng_;
  Mlp generator_;
  Mlp phi_;
  Mlp psi_;
  Matrix particles_;
  Matrix eval_latent_;
  Matrix eval_data_;
  int epochs_done_ = 0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Returning true after a record ends training without an abort reason.
using StopRule = std::function<bool(const MetricsRecord&)>;

/// Runs config.epochs epochs. Emits nothing when epochs == 0, otherwise the
/// epoch-0 baseline followed by one record per epoch. Stops early, with
/// abort_reason set, if a loss or parameter becomes non-finite.
std::vector<MetricsRecord> train(const TrainConfig& config, const Sampler& prior, const ParticleCloud& data,
                                 const MetricsSink& sink = {}, const StopRule& stop = {});

/// Metrics CSV with header `epoch,wall_ms,w1,w2,seed,k`.
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);

}  // namespace w2flow
