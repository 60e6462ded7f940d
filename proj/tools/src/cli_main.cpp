// w2flow command-line front end.
//
// Exit codes: 0 all checks pass, 1 a check failed, 2 bad config or usage,
// 3 runtime failure (I/O, solver).

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "w2flow_tools/experiments.hpp"

namespace {

using namespace w2flow;
using namespace w2flow::tools;

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kConfig = 2;
constexpr int kRuntime = 3;

struct Flags {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::vector<double> eps;
  std::vector<int> ks;
  std::string backend;
  std::optional<double> threshold;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file (a run manifest also works)");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--seed", f.seeds, "Seed; repeat for several")->take_all();
}

void reject(bool present, const char* flag, Scenario s) {
  if (present) throw ConfigError(std::string(flag) + " does not apply to " + to_string(s));
}

ExperimentConfig resolve(Scenario s, const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? default_config(s) : load_config(s, f.config);
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.eps.empty()) {
    reject(s != Scenario::EulerConvergence, "--eps", s);
    cfg.eps = f.eps;
  }
  if (!f.ks.empty()) {
    reject(s != Scenario::Ring, "--k", s);
    cfg.k_values = f.ks;
  }
  if (!f.backend.empty()) {
    reject(s != Scenario::Ring, "--backend", s);
    try {
      cfg.train.potential_backend = potential_source_from_string(f.backend);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (f.threshold) {
    reject(s != Scenario::Ring, "--threshold", s);
    cfg.threshold = *f.threshold;
  }
  cfg.validate();
  return cfg;
}

int summarize(const ScenarioReport& r, const std::string& out_dir) {
  std::cout << to_string(r.scenario) << ": " << (r.pass() ? "pass" : "FAIL") << " (" << r.checks.size()
            << " checks) -> " << out_dir << '\n';
  if (!r.pass()) std::cerr << "first failure: " << r.first_failure() << '\n';
  return r.pass() ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein-2 gradient-flow experiments"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  Flags f;
  struct Sub {
    const char* name;
    const char* help;
    std::optional<Scenario> scenario;
  };
  const std::vector<Sub> subs{
      {"flow", "Geodesic and gradient-flow identities", Scenario::FlowIdentities},
      {"euler", "Forward Euler scheme convergence", Scenario::EulerConvergence},
      {"ring", "W2-FE training on the Gaussian ring", Scenario::Ring},
      {"equivalence", "W2-FE / W2-GAN update equivalence", Scenario::Equivalence},
      {"selftest", "Small versions of every scenario", std::nullopt},
  };
  std::vector<CLI::App*> cmds;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    if (s.scenario) {
      add_common(cmd, f);
    } else {
      cmd->add_option("--out", f.out, "Output directory");
    }
    if (s.scenario == Scenario::EulerConvergence) cmd->add_option("--eps", f.eps, "Step size; repeat for several")->take_all();
    if (s.scenario == Scenario::Ring) {
      cmd->add_option("--k", f.ks, "Persistency level; repeat for several")->take_all();
      cmd->add_option("--backend", f.backend, "Potential backend")->check(CLI::IsMember({"exact", "neural"}));
      cmd->add_option("--threshold", f.threshold, "Fraction of the initial W2 that counts as converged");
    }
    cmds.push_back(cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!cmds[i]->parsed()) continue;
      if (!subs[i].scenario) {
        const std::string out = f.out.empty() ? "w2flow_out/selftest" : f.out;
        int code = kPass;
        for (const ScenarioReport& r : run_selftest(out)) code = std::max(code, summarize(r, out));
        return code;
      }
      const ExperimentConfig cfg = resolve(*subs[i].scenario, f);
      return summarize(run_scenario(cfg), cfg.out_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kConfig;
}
