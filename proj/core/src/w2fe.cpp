#include "w2flow/w2fe.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "w2flow/ot.hpp"

namespace w2flow {

std::string to_string(PotentialSource s) { return s == PotentialSource::Neural ? "neural" : "exact"; }

PotentialSource potential_source_from_string(const std::string& s) {
  if (s == "neural") return PotentialSource::Neural;
  if (s == "exact" || s == "exact_ot") return PotentialSource::ExactOt;
  throw Error("unknown potential backend '" + s + "' (expected exact or neural)");
}

std::string to_string(GeneratorMode g) { return g == GeneratorMode::Network ? "network" : "direct_particle"; }

GeneratorMode generator_mode_from_string(const std::string& s) {
  if (s == "network") return GeneratorMode::Network;
  if (s == "direct_particle") return GeneratorMode::DirectParticle;
  throw Error("unknown generator mode '" + s + "' (expected network or direct_particle)");
}

void TrainConfig::validate() const {
  if (m < 1) throw Error("config: m must be >= 1");
  if (!(delta_t > 0.0 && delta_t < 1.0)) throw Error("config: delta_t must lie in (0, 1)");
  if (K < 1) throw Error("config: K must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("config: lambda must be >= 0");
  if (!(gamma_g > 0.0) || !std::isfinite(gamma_g)) throw Error("config: gamma_g must be > 0");
  if (!(gamma_d > 0.0) || !std::isfinite(gamma_d)) throw Error("config: gamma_d must be > 0");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (d_updates_per_epoch < 0) throw Error("config: d_updates_per_epoch must be >= 0");
  if (eval_size < 1) throw Error("config: eval_size must be >= 1");
  if (arch.generator.size() < 2 || arch.potential.size() < 2) throw Error("config: architectures need >= 2 layers");
  if (arch.potential.back() != 1) throw Error("config: potential networks must have a scalar output");
  if (arch.potential.front() != arch.generator.back())
    throw Error("config: potential input size must equal generator output size");
}

Sampler gaussian_sampler(GaussianSpec spec) {
  spec.validate();
  Eigen::LLT<Matrix> llt(spec.covariance);
  Matrix lower = llt.matrixL();
  return [mean = std::move(spec.mean), lower = std::move(lower)](Eigen::Index count, Rng& rng) {
    Matrix out(count, mean.size());
    Vector z(mean.size());
    for (Eigen::Index i = 0; i < count; ++i) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
      out.row(i) = (mean + lower * z).transpose();
    }
    return out;
  };
}

namespace {

// Partial Fisher-Yates: first `count` entries of a seeded shuffle.
std::vector<Eigen::Index> draw_without_replacement(Eigen::Index n, Eigen::Index count, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto r = k + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - k)));
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(r)]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

Matrix gather_rows(const Matrix& points, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), points.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = points.row(rows[k]);
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

Sampler empirical_sampler(Matrix points) {
  if (points.rows() == 0) throw Error("empirical sampler needs at least one point");
  return [points = std::move(points)](Eigen::Index count, Rng& rng) -> Matrix {
    if (count == points.rows()) return points;
    if (count > points.rows())
      throw Error("cannot draw " + std::to_string(count) + " distinct points from " + std::to_string(points.rows()));
    return gather_rows(points, draw_without_replacement(points.rows(), count, rng));
  };
}

DiscriminatorLoss discriminator_loss(const Mlp& phi, const Mlp& psi, const Matrix& gen_batch,
                                     const Matrix& data_batch, double lambda) {
  if (gen_batch.rows() != data_batch.rows() || gen_batch.cols() != data_batch.cols())
    throw Error("discriminator batches must have the same shape");
  if (gen_batch.rows() == 0) throw Error("discriminator batches must be non-empty");
  if (phi.output_dim() != 1 || psi.output_dim() != 1) throw Error("potential networks must have scalar output");

  const Eigen::Index m = gen_batch.rows();
  const Vector phi_y = phi.forward(gen_batch).col(0);
  const Vector psi_x = psi.forward(data_batch).col(0);
  const Vector half_sq = 0.5 * (gen_batch - data_batch).rowwise().squaredNorm();

  DiscriminatorLoss out;
  Matrix upstream(m, 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double slack = phi_y[i] + psi_x[i] - half_sq[i];
    const bool hinge = slack > 0.0;
    total += phi_y[i] + psi_x[i] - (hinge ? lambda * slack : 0.0);
    upstream(i, 0) = (1.0 - (hinge ? lambda : 0.0)) / static_cast<double>(m);
    out.active += hinge ? 1 : 0;
  }
  out.value = total / static_cast<double>(m);
  out.grad_phi = phi.backward(gen_batch, upstream).params;
  out.grad_psi = psi.backward(data_batch, upstream).params;
  return out;
}

Matrix exact_potential_gradients(const Matrix& gen_batch, const Matrix& data_batch) {
  if (gen_batch.rows() != data_batch.rows()) throw Error("exact potential gradients need equal batch sizes");
  const ParticleCloud gen = uniform_cloud(gen_batch);
  const ParticleCloud data = uniform_cloud(data_batch);
  return potential_gradient(gen, solve_assignment(gen, data).assignment, data);
}

Matrix make_targets(const Matrix& gen_points, const Matrix& grad_phi, double delta_t) {
  if (gen_points.rows() != grad_phi.rows() || gen_points.cols() != grad_phi.cols())
    throw Error("make_targets: shape mismatch");
  return gen_points - delta_t * grad_phi;
}

FitResult generator_update_w2fe(const Mlp& generator, const Matrix& z_batch, const Matrix& targets, int K,
                                double gamma_g, const FitObserver& observer) {
  return persistent_fit(generator, z_batch, targets, K, gamma_g, observer);
}

GradientVector composed_potential_grad(const Mlp& generator, const Matrix& z_batch, const Mlp& phi) {
  if (phi.output_dim() != 1) throw Error("potential network must have scalar output");
  if (phi.input_dim() != generator.output_dim()) throw Error("potential input does not match generator output");
  const Matrix y = generator.forward(z_batch);
  const Matrix upstream = input_gradients(phi, y) / static_cast<double>(z_batch.rows());
  return generator.backward(z_batch, upstream).params;
}

Mlp generator_update_w2gan(const Mlp& generator, const Matrix& z_batch, const Mlp& phi, double lr) {
  return sgd_step(generator, composed_potential_grad(generator, z_batch, phi), lr);
}

double equivalence_residual(const Mlp& g0, const Mlp& phi, const Matrix& z_batch, double gamma_g, double delta_t,
                            int K) {
  if (K < 1) throw Error("equivalence_residual needs K >= 1");
  const Matrix y = g0.forward(z_batch);
  const Matrix targets = make_targets(y, input_gradients(phi, y), delta_t);
  const Mlp fe = generator_update_w2fe(g0, z_batch, targets, K, gamma_g).net;

  Mlp gan = g0;
  for (int k = 0; k < K; ++k) gan = generator_update_w2gan(gan, z_batch, phi, 2.0 * delta_t * gamma_g);
  return (fe.parameters() - gan.parameters()).cwiseAbs().maxCoeff();
}

std::uint64_t matrix_checksum(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    std::uint64_t bits = 0;
    const double v = m.data()[k];
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

W2feTrainer::W2feTrainer(TrainConfig config, Sampler prior, ParticleCloud data)
    : config_(std::move(config)),
      prior_(std::move(prior)),
      data_(std::move(data)),
      rng_(splitmix(config_.seed)),
      generator_(mlp_new(config_.arch.generator, config_.arch.activation, splitmix(config_.seed ^ 0x67656eull),
                         config_.arch.init_scale)),
      phi_(mlp_new(config_.arch.potential, config_.arch.activation, splitmix(config_.seed ^ 0x706869ull),
                   config_.arch.init_scale)),
      psi_(mlp_new(config_.arch.potential, config_.arch.activation, splitmix(config_.seed ^ 0x707369ull),
                   config_.arch.init_scale)) {
  config_.validate();
  if (!prior_) throw Error("trainer needs a prior sampler");
  if (data_.dim() != config_.arch.generator.back())
    throw Error("data dimension " + std::to_string(data_.dim()) + " does not match generator output");

  const bool direct = config_.generator_mode == GeneratorMode::DirectParticle;
  Rng eval_rng(splitmix(config_.seed ^ 0x6576616cull));
  const Eigen::Index eval_n = direct ? config_.m : std::min<Eigen::Index>(config_.eval_size, data_.size());
  if (eval_n > data_.size())
    throw Error("evaluation needs " + std::to_string(eval_n) + " data points, data has " +
                std::to_string(data_.size()));
  eval_data_ = eval_n == data_.size() ? data_.points()
                                      : gather_rows(data_.points(), draw_without_replacement(data_.size(), eval_n, eval_rng));
  if (direct) {
    particles_ = prior_(config_.m, rng_);
    if (particles_.cols() != data_.dim()) throw Error("direct-particle prior must live in the data space");
  } else {
    eval_latent_ = prior_(eval_n, eval_rng);
    if (eval_latent_.cols() != generator_.input_dim())
      throw Error("prior dimension does not match generator input");
  }
}

Matrix W2feTrainer::generate(const Matrix& z) const {
  if (config_.generator_mode == GeneratorMode::DirectParticle) return particles_;
  return generator_.forward(z);
}

Matrix W2feTrainer::sample_data(Eigen::Index count) {
  if (data_.is_uniform()) {
    if (count == data_.size()) return data_.points();
    if (count < data_.size()) return gather_rows(data_.points(), draw_without_replacement(data_.size(), count, rng_));
  }
  // Weighted (or oversized) batches: i.i.d. draws by inverse CDF.
  Vector cdf(data_.size());
  std::partial_sum(data_.weights().begin(), data_.weights().end(), cdf.begin());
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(count));
  for (auto& r : rows) {
    const double u = rng_.uniform() * cdf[cdf.size() - 1];
    r = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    r = std::min(r, data_.size() - 1);
  }
  return gather_rows(data_.points(), rows);
}

Matrix W2feTrainer::potential_gradients(const Matrix& gen, const Matrix& data) const {
  if (config_.potential_backend == PotentialSource::ExactOt) return exact_potential_gradients(gen, data);
  return input_gradients(phi_, gen);
}

EpochTrace W2feTrainer::run_epoch() {
  EpochTrace trace;
  const Eigen::Index m = config_.m;
  const bool direct = config_.generator_mode == GeneratorMode::DirectParticle;
  const auto draw_latent = [&]() -> Matrix { return direct ? Matrix{} : prior_(m, rng_); };

  if (config_.potential_backend == PotentialSource::Neural) {
    for (int u = 0; u < config_.d_updates_per_epoch; ++u) {
      const Matrix x = sample_data(m);
      const Matrix y = generate(draw_latent());
      const DiscriminatorLoss dl = discriminator_loss(phi_, psi_, y, x, config_.lambda);
      phi_ = ascent_step(phi_, dl.grad_phi, config_.gamma_d);
      psi_ = ascent_step(psi_, dl.grad_psi, config_.gamma_d);
      trace.discriminator_values.push_back(dl.value);
    }
  }

  const Matrix z = draw_latent();
  const Matrix y = generate(z);
  const Matrix x = config_.potential_backend == PotentialSource::ExactOt ? sample_data(y.rows()) : Matrix{};
  const Matrix targets = make_targets(y, potential_gradients(y, x), config_.delta_t);
  ++trace.target_generations;

  if (direct) {
    particles_ = targets;
    trace.target_checksums.push_back(matrix_checksum(targets));
  } else {
    FitResult fit = generator_update_w2fe(generator_, z, targets, config_.K, config_.gamma_g,
                                          [&](int, double, const Matrix& frozen) {
                                            trace.target_checksums.push_back(matrix_checksum(frozen));
                                          });
    generator_ = std::move(fit.net);
    trace.fit_losses = std::move(fit.losses);
  }
  ++epochs_done_;
  return trace;
}

MetricsRecord W2feTrainer::evaluate(int epoch, double wall_ms) const {
  const Matrix gen = generate(eval_latent_);
  MetricsRecord rec;
  rec.epoch = epoch;
  rec.wall_ms = wall_ms;
  rec.seed = config_.seed;
  rec.K = config_.K;
  if (!gen.allFinite()) {
    rec.w1_loss = rec.w2_loss = std::numeric_limits<double>::infinity();
    rec.abort_reason = "generated evaluation batch is non-finite";
    return rec;
  }
  try {
    const ParticleCloud g = uniform_cloud(gen);
    const ParticleCloud d = uniform_cloud(eval_data_);
    rec.w1_loss = wasserstein(g, d, 1);
    rec.w2_loss = wasserstein(g, d, 2);
  } catch (const Error& e) {
    rec.w1_loss = rec.w2_loss = std::numeric_limits<double>::infinity();
    rec.abort_reason = std::string("evaluation failed: ") + e.what();
  }
  if (!std::isfinite(rec.w1_loss) || !std::isfinite(rec.w2_loss)) {
    rec.w1_loss = rec.w2_loss = std::numeric_limits<double>::infinity();
    if (!rec.abort_reason) rec.abort_reason = "non-finite evaluation loss";
  }
  return rec;
}

std::vector<MetricsRecord> train(const TrainConfig& config, const Sampler& prior, const ParticleCloud& data,
                                 const MetricsSink& sink, const StopRule& stop) {
  std::vector<MetricsRecord> records;
  if (config.epochs == 0) {
    config.validate();
    return records;
  }
  W2feTrainer trainer(config, prior, data);
  const auto emit = [&](MetricsRecord rec) {
    if (sink) sink(rec);
    records.push_back(std::move(rec));
  };

  emit(trainer.evaluate(0, 0.0));
  if (records.back().abort_reason || (stop && stop(records.back()))) return records;

  using Clock = std::chrono::steady_clock;
  double elapsed_ms = 0.0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = Clock::now();
    std::optional<std::string> failure;
    try {
      const EpochTrace trace = trainer.run_epoch();
      for (const double v : trace.discriminator_values)
        if (!std::isfinite(v)) failure = "non-finite discriminator loss";
      for (const double v : trace.fit_losses)
        if (!std::isfinite(v)) failure = "non-finite generator loss";
    } catch (const Error& e) {
      failure = e.what();
    }
    elapsed_ms += std::chrono::duration<double, std::milli>(Clock::now() - start).count();

    if (failure) {
      MetricsRecord rec;
      rec.epoch = epoch;
      rec.wall_ms = elapsed_ms;
      rec.w1_loss = rec.w2_loss = std::numeric_limits<double>::infinity();
      rec.seed = config.seed;
      rec.K = config.K;
      rec.abort_reason = failure;
      emit(std::move(rec));
      break;
    }
    emit(trainer.evaluate(epoch, elapsed_ms));
    if (records.back().abort_reason || (stop && stop(records.back()))) break;
  }
  return records;
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write metrics file: " + path);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "epoch,wall_ms,w1,w2,seed,k\n";
  for (const MetricsRecord& r : records)
    out << r.epoch << ',' << r.wall_ms << ',' << r.w1_loss << ',' << r.w2_loss << ',' << r.seed << ',' << r.K << '\n';
  if (!out) throw Error("write failed: " + path);
}

}  // namespace w2flow
