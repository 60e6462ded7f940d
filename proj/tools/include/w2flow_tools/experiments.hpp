#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "w2flow/error.hpp"
#include "w2flow/w2fe.hpp"

namespace w2flow::tools {

/// Malformed or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Scenario { FlowIdentities, EulerConvergence, Ring, Equivalence };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct RingSpec {
  int modes = 8;
  double radius = 2.0;
  double sigma = 0.05;
  /// Latent dimension of the Gaussian prior (network mode).
  int latent_dim = 2;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::FlowIdentities;
  std::string out_dir = "w2flow_out";
  std::vector<std::uint64_t> seeds{0};

  // flow_identities, euler_convergence
  int n_particles = 50;
  int dim = 2;
  std::vector<double> eps{0.5, 0.1, 0.01};
  std::vector<double> t_grid;
  /// Minimum Euler steps per eps; more are taken when the t grid needs them.
  int min_steps = 50;
  /// Sup deviation at eps <= 0.01 must stay below this fraction of W2(mu0, mud).
  double small_eps_sup_fraction = 0.05;
  /// Scales the convergence bound; values below 1 deliberately break it.
  double fault_bound_scale = 1.0;

  // ring
  TrainConfig train;
  RingSpec ring;
  std::vector<int> k_values{1, 5, 10};
  double threshold = 0.05;
  bool stop_at_threshold = true;
  /// Allowed epoch excess for each K after the first increase.
  int ordering_slack = 10;

  // equivalence
  std::vector<double> delta_ts{0.1, 0.5};
  int batch = 16;
  int hidden = 8;

  void validate() const;
};

/// Defaults for a scenario, with the t grid filled in.
ExperimentConfig default_config(Scenario s);

/// Parses a JSON object over the scenario defaults. Unknown keys are errors;
/// keys starting with '_' are comments and ignored.
/// A run manifest is accepted too (its "config" member is used).
ExperimentConfig config_from_json(Scenario s, const std::string& json_text);
ExperimentConfig load_config(Scenario s, const std::string& path);

/// Fully resolved configuration as JSON text.
std::string config_to_json(const ExperimentConfig& cfg);

std::string version_string();

struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
};

struct ScenarioReport {
  Scenario scenario;
  std::vector<Check> checks;
  bool pass() const;
  /// First failing check, or empty.
  std::string first_failure() const;
};

/// Writes manifest.json (config, version, seeds) and the scenario outputs
/// under cfg.out_dir, then report.json with every check.
ScenarioReport run_flow_identities(const ExperimentConfig& cfg);
ScenarioReport run_euler_convergence(const ExperimentConfig& cfg);
ScenarioReport run_ring(const ExperimentConfig& cfg);
ScenarioReport run_equivalence(const ExperimentConfig& cfg);
ScenarioReport run_scenario(const ExperimentConfig& cfg);

/// Small versions of all four scenarios under out_dir/<scenario>.
std::vector<ScenarioReport> run_selftest(const std::string& out_dir);

/// Random instance pair used by the flow and Euler scenarios.
struct Instance {
  ParticleCloud mu0;
  ParticleCloud mud;
};
Instance make_instance(std::uint64_t seed, int n, int dim);

/// First epoch with w2 <= threshold * w2(epoch 0), or -1.
int epochs_to_threshold(const std::vector<MetricsRecord>& records, double threshold);

/// Median with -1 read as "never"; returns -1 when the median itself is "never".
double median_epochs(std::vector<int> epochs);

/// Parallelism cap from W2FLOW_THREADS, else the hardware concurrency.
unsigned worker_count(std::size_t jobs);

struct RingRun {
  int K = 0;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  int epochs_to_threshold = -1;
};

/// One ring training run, as used by run_ring.
RingRun ring_training_run(const ExperimentConfig& cfg, int K, std::uint64_t seed);

}  // namespace w2flow::tools
