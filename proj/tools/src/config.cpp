#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "w2flow_tools/experiments.hpp"

#ifndef W2FLOW_VERSION_STRING
#define W2FLOW_VERSION_STRING "unknown"
#endif

namespace w2flow::tools {

using nlohmann::json;

std::string version_string() { return W2FLOW_VERSION_STRING; }

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::FlowIdentities: return "flow_identities";
    case Scenario::EulerConvergence: return "euler_convergence";
    case Scenario::Ring: return "ring_w2fe";
    case Scenario::Equivalence: return "equivalence";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "flow_identities" || name == "flow") return Scenario::FlowIdentities;
  if (name == "euler_convergence" || name == "euler") return Scenario::EulerConvergence;
  if (name == "ring_w2fe" || name == "ring") return Scenario::Ring;
  if (name == "equivalence") return Scenario::Equivalence;
  throw ConfigError("unknown scenario '" + name + "'");
}

namespace {

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out;
  for (int k = 0; k < count; ++k) out.push_back(lo + (hi - lo) * k / (count - 1));
  return out;
}

// Ring defaults: desk-scale choices, not taken from any published setup.
TrainConfig ring_train_defaults() {
  TrainConfig t;
  t.m = 64;
  t.gamma_g = 0.05;
  t.gamma_d = 1e-3;
  t.lambda = 1.0;
  t.delta_t = 0.8;
  t.K = 1;
  t.epochs = 20000;
  t.d_updates_per_epoch = 5;
  t.potential_backend = PotentialSource::ExactOt;
  t.generator_mode = GeneratorMode::Network;
  t.arch.generator = {2, 32, 32, 2};
  t.arch.potential = {2, 32, 32, 1};
  t.arch.activation = Activation::Tanh;
  t.arch.init_scale = 1.0;
  t.eval_size = 64;
  return t;
}

template <typename T>
T take(const json& obj, const char* key, const T& fallback, std::set<std::string>& seen) {
  seen.insert(key);
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!seen.count(it.key()) && it.key().rfind('_', 0) != 0) throw ConfigError("unknown config key '" + where + it.key() + "'");
}

void read_train(const json& j, TrainConfig& t) {
  if (!j.is_object()) throw ConfigError("config key 'train' must be an object");
  std::set<std::string> seen;
  t.m = take(j, "m", t.m, seen);
  t.gamma_g = take(j, "gamma_g", t.gamma_g, seen);
  t.gamma_d = take(j, "gamma_d", t.gamma_d, seen);
  t.lambda = take(j, "lambda", t.lambda, seen);
  t.delta_t = take(j, "delta_t", t.delta_t, seen);
  t.epochs = take(j, "epochs", t.epochs, seen);
  t.d_updates_per_epoch = take(j, "d_updates_per_epoch", t.d_updates_per_epoch, seen);
  t.eval_size = take(j, "eval_size", t.eval_size, seen);
  try {
    t.potential_backend =
        potential_source_from_string(take(j, "potential_backend", to_string(t.potential_backend), seen));
    t.generator_mode = generator_mode_from_string(take(j, "generator_mode", to_string(t.generator_mode), seen));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  seen.insert("architectures");
  if (j.contains("architectures")) {
    const json& a = j.at("architectures");
    if (!a.is_object()) throw ConfigError("config key 'train.architectures' must be an object");
    std::set<std::string> aseen;
    t.arch.generator = take(a, "generator", t.arch.generator, aseen);
    t.arch.potential = take(a, "potential", t.arch.potential, aseen);
    t.arch.init_scale = take(a, "init_scale", t.arch.init_scale, aseen);
    try {
      t.arch.activation = activation_from_string(take(a, "activation", to_string(t.arch.activation), aseen));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    reject_unknown(a, aseen, "train.architectures.");
  }
  reject_unknown(j, seen, "train.");
}

json train_to_json(const TrainConfig& t) {
  return {{"m", t.m},
          {"gamma_g", t.gamma_g},
          {"gamma_d", t.gamma_d},
          {"lambda", t.lambda},
          {"delta_t", t.delta_t},
          {"epochs", t.epochs},
          {"d_updates_per_epoch", t.d_updates_per_epoch},
          {"eval_size", t.eval_size},
          {"potential_backend", to_string(t.potential_backend)},
          {"generator_mode", to_string(t.generator_mode)},
          {"architectures",
           {{"generator", t.arch.generator},
            {"potential", t.arch.potential},
            {"activation", to_string(t.arch.activation)},
            {"init_scale", t.arch.init_scale}}}};
}

}  // namespace

ExperimentConfig default_config(Scenario s) {
  ExperimentConfig c;
  c.scenario = s;
  c.out_dir = "w2flow_out/" + to_string(s);
  c.t_grid = linspace(0.0, 2.0, 40);
  switch (s) {
    case Scenario::FlowIdentities:
      c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
      c.t_grid = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0};
      break;
    case Scenario::EulerConvergence:
      c.seeds = {0, 1, 2};
      break;
    case Scenario::Ring:
      c.seeds = {0, 1, 2, 3, 4};
      c.n_particles = 64;
      c.train = ring_train_defaults();
      break;
    case Scenario::Equivalence:
      c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (n_particles < 1) throw ConfigError("n_particles must be >= 1");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  switch (scenario) {
    case Scenario::FlowIdentities:
      for (const double t : t_grid)
        if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("t_grid entries must be finite and >= 0");
      break;
    case Scenario::EulerConvergence:
      if (eps.empty()) throw ConfigError("eps list must not be empty");
      for (const double e : eps)
        if (!(e > 0.0 && e < 1.0)) throw ConfigError("eps entries must lie in (0, 1)");
      if (t_grid.empty()) throw ConfigError("t_grid must not be empty");
      for (const double t : t_grid)
        if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("t_grid entries must be finite and >= 0");
      if (min_steps < 0) throw ConfigError("min_steps must be >= 0");
      if (!(fault_bound_scale >= 0.0)) throw ConfigError("fault_bound_scale must be >= 0");
      break;
    case Scenario::Ring: {
      if (k_values.empty()) throw ConfigError("k list must not be empty");
      for (const int k : k_values)
        if (k < 1) throw ConfigError("K values must be >= 1");
      if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
      if (ring.modes < 1 || !(ring.radius >= 0.0) || !(ring.sigma > 0.0) || ring.latent_dim < 1)
        throw ConfigError("ring needs modes >= 1, radius >= 0, sigma > 0, latent_dim >= 1");
      if (train.m > n_particles) throw ConfigError("train.m cannot exceed n_particles");
      TrainConfig probe = train;
      try {
        probe.validate();
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      const bool direct = train.generator_mode == GeneratorMode::DirectParticle;
      if (!direct && train.arch.generator.front() != ring.latent_dim)
        throw ConfigError("generator input size must equal ring.latent_dim");
      if (train.arch.generator.back() != 2) throw ConfigError("the ring lives in 2-D; generator output must be 2");
      break;
    }
    case Scenario::Equivalence:
      if (delta_ts.empty()) throw ConfigError("delta_t list must not be empty");
      for (const double d : delta_ts)
        if (!(d >= 0.0 && d < 1.0)) throw ConfigError("delta_t entries must lie in [0, 1)");
      if (batch < 1 || hidden < 1) throw ConfigError("batch and hidden must be >= 1");
      break;
  }
}

ExperimentConfig config_from_json(Scenario s, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("version")) j = j.at("config");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentConfig c = default_config(s);
  std::set<std::string> seen;
  if (j.contains("scenario")) {
    const Scenario named = scenario_from_string(take<std::string>(j, "scenario", "", seen));
    if (named != s) throw ConfigError("config is for scenario " + to_string(named) + ", not " + to_string(s));
  }
  seen.insert("scenario");
  c.out_dir = take(j, "out_dir", c.out_dir, seen);
  c.seeds = take(j, "seeds", c.seeds, seen);
  c.n_particles = take(j, "n_particles", c.n_particles, seen);
  c.dim = take(j, "dim", c.dim, seen);
  c.eps = take(j, "eps", c.eps, seen);
  c.t_grid = take(j, "t_grid", c.t_grid, seen);
  c.min_steps = take(j, "min_steps", c.min_steps, seen);
  c.small_eps_sup_fraction = take(j, "small_eps_sup_fraction", c.small_eps_sup_fraction, seen);
  c.fault_bound_scale = take(j, "fault_bound_scale", c.fault_bound_scale, seen);
  c.k_values = take(j, "k", c.k_values, seen);
  c.threshold = take(j, "threshold", c.threshold, seen);
  c.stop_at_threshold = take(j, "stop_at_threshold", c.stop_at_threshold, seen);
  c.ordering_slack = take(j, "ordering_slack", c.ordering_slack, seen);
  c.delta_ts = take(j, "delta_t", c.delta_ts, seen);
  c.batch = take(j, "batch", c.batch, seen);
  c.hidden = take(j, "hidden", c.hidden, seen);
  seen.insert("train");
  if (j.contains("train")) read_train(j.at("train"), c.train);
  seen.insert("ring");
  if (j.contains("ring")) {
    const json& r = j.at("ring");
    if (!r.is_object()) throw ConfigError("config key 'ring' must be an object");
    std::set<std::string> rseen;
    c.ring.modes = take(r, "modes", c.ring.modes, rseen);
    c.ring.radius = take(r, "radius", c.ring.radius, rseen);
    c.ring.sigma = take(r, "sigma", c.ring.sigma, rseen);
    c.ring.latent_dim = take(r, "latent_dim", c.ring.latent_dim, rseen);
    reject_unknown(r, rseen, "ring.");
  }
  reject_unknown(j, seen, "");
  return c;
}

ExperimentConfig load_config(Scenario s, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_json(s, text.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j = {{"scenario", to_string(c.scenario)},
            {"out_dir", c.out_dir},
            {"seeds", c.seeds},
            {"n_particles", c.n_particles},
            {"dim", c.dim}};
  switch (c.scenario) {
    case Scenario::FlowIdentities:
      j["t_grid"] = c.t_grid;
      break;
    case Scenario::EulerConvergence:
      j["eps"] = c.eps;
      j["t_grid"] = c.t_grid;
      j["min_steps"] = c.min_steps;
      j["small_eps_sup_fraction"] = c.small_eps_sup_fraction;
      j["fault_bound_scale"] = c.fault_bound_scale;
      break;
    case Scenario::Ring:
      j["k"] = c.k_values;
      j["threshold"] = c.threshold;
      j["stop_at_threshold"] = c.stop_at_threshold;
      j["ordering_slack"] = c.ordering_slack;
      j["ring"] = {{"modes", c.ring.modes},
                   {"radius", c.ring.radius},
                   {"sigma", c.ring.sigma},
                   {"latent_dim", c.ring.latent_dim}};
      j["train"] = train_to_json(c.train);
      break;
    case Scenario::Equivalence:
      j["delta_t"] = c.delta_ts;
      j["batch"] = c.batch;
      j["hidden"] = c.hidden;
      j["train"] = {{"gamma_g", c.train.gamma_g}};
      break;
  }
  return j.dump(2);
}

}  // namespace w2flow::tools
