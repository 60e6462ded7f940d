#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "w2flow/euler_flow.hpp"
#include "w2flow/geodesics.hpp"
#include "w2flow_tools/experiments.hpp"

namespace w2flow::tools {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ull + stream;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kSource = 1, kTarget = 2, kData = 3, kLatent = 4, kGenerator = 5, kPotential = 6, kBatch = 7 };

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void add_check(ScenarioReport& r, std::string name, double value, double limit, bool pass) {
  r.checks.push_back({std::move(name), value, limit, pass});
}

// value <= limit, with NaN failing.
void add_le(ScenarioReport& r, std::string name, double value, double limit) {
  add_check(r, std::move(name), value, limit, value <= limit);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

void write_manifest(const ExperimentConfig& cfg, const json& derived) {
  fs::create_directories(cfg.out_dir);
  const json manifest = {{"scenario", to_string(cfg.scenario)},
                         {"version", version_string()},
                         {"config", json::parse(config_to_json(cfg))},
                         {"seeds", cfg.seeds},
                         {"derived_seeds", derived}};
  open_out(fs::path(cfg.out_dir) / "manifest.json") << manifest.dump(2) << '\n';
}

void write_report(const ExperimentConfig& cfg, const ScenarioReport& report) {
  json checks = json::array();
  for (const Check& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                      {"limit", c.limit},
                      {"pass", c.pass}});
  }
  const json doc = {{"scenario", to_string(report.scenario)},
                    {"status", report.pass() ? "pass" : "fail"},
                    {"checks", checks}};
  open_out(fs::path(cfg.out_dir) / "report.json") << doc.dump(2) << '\n';
}

json instance_seeds(const std::vector<std::uint64_t>& seeds) {
  json out = json::object();
  for (const auto s : seeds)
    out[std::to_string(s)] = {{"source", derive_seed(s, kSource)}, {"target", derive_seed(s, kTarget)}};
  return out;
}

}  // namespace

bool ScenarioReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string ScenarioReport::first_failure() const {
  for (const Check& c : checks)
    if (!c.pass) return c.name + " = " + fmt(c.value) + " (limit " + fmt(c.limit) + ")";
  return {};
}

Instance make_instance(std::uint64_t seed, int n, int dim) {
  GaussianSpec source{Vector::Zero(dim), Matrix::Identity(dim, dim)};
  Vector mean = Vector::Constant(dim, 1.0);
  mean[0] = 3.0;
  Vector spread = Vector::Constant(dim, 2.0);
  spread[0] = 0.5;
  GaussianSpec target{mean, Matrix(spread.asDiagonal())};
  return {sample_gaussian(source, n, derive_seed(seed, kSource)), sample_gaussian(target, n, derive_seed(seed, kTarget))};
}

// ---------------------------------------------------------------- flow

ScenarioReport run_flow_identities(const ExperimentConfig& cfg) {
  cfg.validate();
  write_manifest(cfg, instance_seeds(cfg.seeds));
  ScenarioReport report{Scenario::FlowIdentities, {}};

  const std::vector<std::pair<double, double>> speed_pairs{{0.0, 1.0}, {0.0, 0.5}, {0.2, 0.7},
                                                           {0.25, 0.75}, {0.5, 1.0}, {0.9, 0.95}};
  const std::vector<std::pair<double, double>> energy_pairs{{0.0, 0.5}, {0.3, 1.1}, {0.5, 2.0},
                                                            {1.0, 3.0}, {0.0, 5.0}, {2.0, 2.5}};
  std::ofstream csv = open_out(fs::path(cfg.out_dir) / "residuals.csv");
  csv << "seed,kind,a,b,residual,limit\n";

  for (const auto seed : cfg.seeds) {
    const Instance inst = make_instance(seed, cfg.n_particles, cfg.dim);
    const FlowCurve curve = build_flow(inst.mu0, inst.mud);
    const double w = curve.w2_0d();
    const double tol = 1e-9 * (1.0 + w);
    const std::string tag = "seed" + std::to_string(seed) + "/";
    const auto record = [&](const std::string& kind, double a, double b, double value, double limit) {
      csv << seed << ',' << kind << ',' << a << ',' << b << ',' << value << ',' << limit << '\n';
      add_le(report, tag + kind + "(" + fmt(a) + "," + fmt(b) + ")", value, limit);
    };

    for (const auto& [s1, s2] : speed_pairs) record("speed", s1, s2, geodesic_speed_residual(curve, s1, s2), tol);
    for (const double t : cfg.t_grid) record("decay", t, 0.0, decay_residual(curve, t), tol);
    for (const auto& [s, t] : energy_pairs) record("energy", s, t, energy_identity_residual(curve, s, t), tol);
    for (const double t : cfg.t_grid)
      record("slope", t, 0.0, std::abs(local_slope(flow_point(curve, t), inst.mud) - std::exp(-t) * w), tol);
    for (const double t : {0.0, 0.5, 1.0, 2.0}) {
      const double fd = metric_derivative_fd(curve, t, 1e-5);
      record("metric_derivative", t, 1e-5, std::abs(fd - std::exp(-t) * w), 1e-4 * w + 1e-12);
    }
    for (const double t : {0.2, 1.0}) {
      const double rate = energy_rate_fd(curve, t, 1e-4);
      record("energy_rate", t, 1e-4, std::abs(rate + std::exp(-2.0 * t) * w * w), 1e-4 * w * w + 1e-12);
      const double slope = local_slope(flow_point(curve, t), inst.mud);
      const double speed = metric_derivative_fd(curve, t, 1e-5);
      record("maximal_slope", t, 0.0, std::abs(rate + slope * speed), 1e-3 * std::abs(rate) + 1e-12);
    }
  }
  write_report(cfg, report);
  return report;
}

// ---------------------------------------------------------------- euler

ScenarioReport run_euler_convergence(const ExperimentConfig& cfg) {
  cfg.validate();
  write_manifest(cfg, instance_seeds(cfg.seeds));
  ScenarioReport report{Scenario::EulerConvergence, {}};

  const double t_max = *std::max_element(cfg.t_grid.begin(), cfg.t_grid.end());
  std::ofstream summary = open_out(fs::path(cfg.out_dir) / "summary.csv");
  summary << "seed,eps,n_steps,w2_0d,sup_deviation,convergence_bound,max_on_geodesic,max_step_residual\n";

  for (const auto seed : cfg.seeds) {
    const Instance inst = make_instance(seed, cfg.n_particles, cfg.dim);
    const FlowCurve curve = build_flow(inst.mu0, inst.mud);
    const double w = curve.w2_0d();
    const std::string tag = "seed" + std::to_string(seed) + "/eps" + "=";

    std::vector<std::vector<double>> devs;
    std::vector<double> sups;
    for (const double eps : cfg.eps) {
      // Enough steps that the piecewise flow covers t_max.
      const int n_steps = std::max(cfg.min_steps, static_cast<int>(std::ceil(t_max / eps)) + 1);
      const EulerTrajectory traj = run_euler(inst.mu0, inst.mud, eps, n_steps);
      const std::string at = tag + fmt(eps) + "/";

      double on_geo = 0.0;
      for (const double r : on_geodesic_residuals(traj, curve)) on_geo = std::max(on_geo, r);
      add_le(report, at + "on_geodesic", on_geo, 1e-9 * (1.0 + w));

      double step = 0.0;
      for (int n = 1; n <= traj.steps; ++n) step = std::max(step, step_distance_residual(traj, n));
      add_le(report, at + "step_identity", step, 1e-9);

      const std::vector<double> dev = deviations(traj, curve, cfg.t_grid);
      double excess = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < dev.size(); ++k) {
        const double bound = cfg.fault_bound_scale * convergence_bound(cfg.t_grid[k], eps, w);
        excess = std::max(excess, dev[k] - bound);
      }
      add_le(report, at + "deviation_minus_bound", excess, 1e-9);

      const double sup = *std::max_element(dev.begin(), dev.end());
      if (eps <= 0.01) add_le(report, at + "sup_deviation_fraction", sup / std::max(w, 1e-300), cfg.small_eps_sup_fraction);

      summary << seed << ',' << eps << ',' << n_steps << ',' << w << ',' << sup << ','
              << cfg.fault_bound_scale * convergence_bound(t_max, eps, w) << ',' << on_geo << ',' << step << '\n';
      devs.push_back(dev);
      sups.push_back(sup);

      if (seed == cfg.seeds.front()) {
        export_trajectory(traj, (fs::path(cfg.out_dir) / "trajectories" / ("eps_" + fmt(eps))).string(), seed);
      }
    }

    // Deviation columns per eps, one row per grid time.
    std::ofstream table = open_out(fs::path(cfg.out_dir) / ("deviations_seed" + std::to_string(seed) + ".csv"));
    table << 't';
    for (const double eps : cfg.eps) table << ",eps_" << fmt(eps);
    table << '\n';
    for (std::size_t k = 0; k < cfg.t_grid.size(); ++k) {
      table << cfg.t_grid[k];
      for (const auto& col : devs) table << ',' << col[k];
      table << '\n';
    }

    // Smaller eps must give a strictly smaller sup deviation.
    std::vector<std::size_t> order(cfg.eps.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cfg.eps[a] > cfg.eps[b]; });
    for (std::size_t k = 1; k < order.size(); ++k) {
      const double prev = sups[order[k - 1]], next = sups[order[k]];
      if (cfg.eps[order[k - 1]] == cfg.eps[order[k]] || w == 0.0) continue;
      add_check(report, tag + fmt(cfg.eps[order[k]]) + "/sup_decreases", next, prev, next < prev);
    }
  }
  write_report(cfg, report);
  return report;
}

// ---------------------------------------------------------------- ring

int epochs_to_threshold(const std::vector<MetricsRecord>& records, double threshold) {
  if (records.empty()) return -1;
  const double w0 = records.front().w2_loss;
  for (const MetricsRecord& r : records)
    if (!r.abort_reason && r.w2_loss <= threshold * w0) return r.epoch;
  return -1;
}

double median_epochs(std::vector<int> epochs) {
  if (epochs.empty()) return -1.0;
  constexpr double kNever = std::numeric_limits<double>::infinity();
  std::vector<double> v;
  for (const int e : epochs) v.push_back(e < 0 ? kNever : static_cast<double>(e));
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double med = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return std::isfinite(med) ? med : -1.0;
}

unsigned worker_count(std::size_t jobs) {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("W2FLOW_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("W2FLOW_THREADS must be a positive integer, got '") + env + "'");
    cap = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(cap, jobs)));
}

RingRun ring_training_run(const ExperimentConfig& cfg, int K, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.K = K;
  tc.seed = seed;
  const auto n = static_cast<Eigen::Index>(cfg.n_particles);
  const ParticleCloud data =
      sample_gaussian_ring(cfg.ring.modes, cfg.ring.radius, cfg.ring.sigma, n, derive_seed(seed, kData));
  const int latent = tc.generator_mode == GeneratorMode::DirectParticle ? 2 : cfg.ring.latent_dim;
  const GaussianSpec prior_spec{Vector::Zero(latent), Matrix::Identity(latent, latent)};
  const Sampler prior = empirical_sampler(sample_gaussian(prior_spec, n, derive_seed(seed, kLatent)).points());

  StopRule stop;
  if (cfg.stop_at_threshold) {
    stop = [w0 = std::optional<double>{}, threshold = cfg.threshold](const MetricsRecord& r) mutable {
      if (!w0) w0 = r.w2_loss;
      return r.epoch > 0 && r.w2_loss <= threshold * *w0;
    };
  }
  RingRun run{K, seed, train(tc, prior, data, {}, stop), -1};
  run.epochs_to_threshold = epochs_to_threshold(run.records, cfg.threshold);
  return run;
}

ScenarioReport run_ring(const ExperimentConfig& cfg) {
  cfg.validate();
  json derived = json::object();
  for (const auto s : cfg.seeds)
    derived[std::to_string(s)] = {{"data", derive_seed(s, kData)}, {"latent", derive_seed(s, kLatent)}, {"train", s}};
  write_manifest(cfg, derived);
  ScenarioReport report{Scenario::Ring, {}};

  std::vector<std::pair<int, std::uint64_t>> jobs;
  for (const int k : cfg.k_values)
    for (const auto s : cfg.seeds) jobs.emplace_back(k, s);
  std::vector<RingRun> runs(jobs.size());
  std::vector<std::string> failures(jobs.size());

  // Independent runs fan out; each writes only its own metrics file.
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        runs[j] = ring_training_run(cfg, jobs[j].first, jobs[j].second);
        write_metrics_csv(runs[j].records, (fs::path(cfg.out_dir) / ("metrics_k" + std::to_string(jobs[j].first) +
                                                                      "_seed" + std::to_string(jobs[j].second) + ".csv"))
                                               .string());
      } catch (const std::exception& e) {
        failures[j] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned workers = worker_count(jobs.size());
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t j = 0; j < jobs.size(); ++j)
    if (!failures[j].empty()) throw Error("ring run K=" + std::to_string(jobs[j].first) + " seed=" +
                                          std::to_string(jobs[j].second) + " failed: " + failures[j]);

  std::ofstream summary = open_out(fs::path(cfg.out_dir) / "summary.csv");
  summary << "k,seed,epochs_to_threshold,epochs_run,w2_initial,w2_final\n";
  const bool direct = cfg.train.generator_mode == GeneratorMode::DirectParticle;
  for (const RingRun& run : runs) {
    const MetricsRecord& first = run.records.front();
    const MetricsRecord& last = run.records.back();
    summary << run.K << ',' << run.seed << ',' << run.epochs_to_threshold << ',' << last.epoch << ','
            << first.w2_loss << ',' << last.w2_loss << '\n';
    const std::string tag = "k" + std::to_string(run.K) + "/seed" + std::to_string(run.seed) + "/";
    add_check(report, tag + "finite", last.abort_reason ? 1.0 : 0.0, 0.0, !last.abort_reason);

    // Full-batch particle mode is the Euler scheme itself: exact geometric contraction.
    if (direct && cfg.train.potential_backend == PotentialSource::ExactOt && cfg.train.m == cfg.n_particles) {
      double worst = 0.0;
      for (const MetricsRecord& r : run.records)
        worst = std::max(worst, std::abs(r.w2_loss - std::pow(1.0 - cfg.train.delta_t, r.epoch) * first.w2_loss));
      add_le(report, tag + "contraction", worst, 1e-9 * first.w2_loss);
    }
  }

  std::vector<int> ks = cfg.k_values;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  std::ofstream medians = open_out(fs::path(cfg.out_dir) / "median_epochs.csv");
  medians << "k,median_epochs_to_threshold\n";
  std::vector<double> med;
  for (const int k : ks) {
    std::vector<int> e;
    for (const RingRun& run : runs)
      if (run.K == k) e.push_back(run.epochs_to_threshold);
    med.push_back(median_epochs(e));
    medians << k << ',' << med.back() << '\n';
  }

  // The first increase of K must strictly cut the median; later ones may cost
  // at most ordering_slack epochs. "Never reached" (-1) counts as infinite.
  if (!direct) {
    const auto as_epochs = [](double m) { return m < 0 ? std::numeric_limits<double>::infinity() : m; };
    for (std::size_t i = 1; i < ks.size(); ++i) {
      const double slower = as_epochs(med[i - 1]), faster = as_epochs(med[i]);
      const std::string name = "median_k" + std::to_string(ks[i]) + "_vs_k" + std::to_string(ks[i - 1]);
      if (i == 1) {
        add_check(report, name, med[i], med[i - 1], std::isfinite(faster) && faster < slower);
      } else {
        add_check(report, name, med[i], med[i - 1] + cfg.ordering_slack,
                  std::isfinite(faster) && faster <= slower + cfg.ordering_slack);
      }
    }
  }
  write_report(cfg, report);
  return report;
}

// ---------------------------------------------------------------- equivalence

ScenarioReport run_equivalence(const ExperimentConfig& cfg) {
  cfg.validate();
  json derived = json::object();
  for (const auto s : cfg.seeds)
    derived[std::to_string(s)] = {
        {"generator", derive_seed(s, kGenerator)}, {"potential", derive_seed(s, kPotential)}, {"batch", derive_seed(s, kBatch)}};
  write_manifest(cfg, derived);
  ScenarioReport report{Scenario::Equivalence, {}};

  std::vector<double> dts = cfg.delta_ts;
  if (std::find(dts.begin(), dts.end(), 0.0) == dts.end()) dts.insert(dts.begin(), 0.0);

  std::ofstream csv = open_out(fs::path(cfg.out_dir) / "equivalence.csv");
  csv << "seed,out_dim,delta_t,residual_k1,residual_k2\n";
  for (const auto seed : cfg.seeds) {
    for (const int out : {1, 2}) {
      const Mlp g0 = mlp_new({2, cfg.hidden, out}, Activation::Tanh, derive_seed(seed, kGenerator));
      const Mlp phi = mlp_new({out, cfg.hidden, 1}, Activation::Tanh, derive_seed(seed, kPotential));
      const Matrix z =
          sample_gaussian({Vector::Zero(2), Matrix::Identity(2, 2)}, cfg.batch, derive_seed(seed, kBatch)).points();
      for (const double dt : dts) {
        const double r1 = equivalence_residual(g0, phi, z, cfg.train.gamma_g, dt, 1);
        const double r2 = equivalence_residual(g0, phi, z, cfg.train.gamma_g, dt, 2);
        csv << seed << ',' << out << ',' << dt << ',' << r1 << ',' << r2 << '\n';
        const std::string tag = "seed" + std::to_string(seed) + "/out" + std::to_string(out) + "/dt=" + fmt(dt) + "/";
        if (dt == 0.0) {
          add_check(report, tag + "k1_zero", r1, 0.0, r1 == 0.0);
        } else {
          add_le(report, tag + "k1", r1, 1e-8);
          const double floor = std::max(1e-6, r1);
          add_check(report, tag + "k2_exceeds", r2, floor, r2 > floor);
        }
      }
    }
  }
  write_report(cfg, report);
  return report;
}

ScenarioReport run_scenario(const ExperimentConfig& cfg) {
  switch (cfg.scenario) {
    case Scenario::FlowIdentities: return run_flow_identities(cfg);
    case Scenario::EulerConvergence: return run_euler_convergence(cfg);
    case Scenario::Ring: return run_ring(cfg);
    case Scenario::Equivalence: return run_equivalence(cfg);
  }
  throw ConfigError("unknown scenario");
}

std::vector<ScenarioReport> run_selftest(const std::string& out_dir) {
  std::vector<ScenarioReport> reports;
  const auto under = [&](Scenario s) {
    ExperimentConfig c = default_config(s);
    c.out_dir = (fs::path(out_dir) / to_string(s)).string();
    return c;
  };

  ExperimentConfig flow = under(Scenario::FlowIdentities);
  flow.seeds = {0, 1};
  flow.n_particles = 20;
  reports.push_back(run_flow_identities(flow));

  ExperimentConfig euler = under(Scenario::EulerConvergence);
  euler.seeds = {0};
  euler.n_particles = 20;
  euler.eps = {0.5, 0.1, 0.01};
  euler.min_steps = 10;
  reports.push_back(run_euler_convergence(euler));

  ExperimentConfig eq = under(Scenario::Equivalence);
  eq.seeds = {0, 1, 2};
  reports.push_back(run_equivalence(eq));

  ExperimentConfig ring = under(Scenario::Ring);
  ring.seeds = {0, 1};
  ring.k_values = {1, 3};
  ring.n_particles = 32;
  ring.train.m = 32;
  ring.train.epochs = 30;
  ring.train.delta_t = 0.2;
  ring.train.generator_mode = GeneratorMode::DirectParticle;
  ring.stop_at_threshold = false;
  reports.push_back(run_ring(ring));
  return reports;
}

}  // namespace w2flow::tools
