#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fedfmc/config.hpp"
#include "fedfmc/errors.hpp"
#include "fedfmc/experiment.hpp"
#include "fedfmc/metrics.hpp"
#include "fedfmc/presets.hpp"

namespace fs = std::filesystem;
using namespace fedfmc;

namespace {

struct Overrides {
  std::optional<Seed> seed;
  bool no_ewc = false;
};

// A path that exists is read as a config file, otherwise the argument may
// name a bundled preset.
RunConfig load(const std::string& arg, const Overrides& o) {
  RunConfig cfg;
  if (fs::exists(arg)) {
    cfg = parse_config(arg);
  } else {
    bool is_preset = false;
    for (const auto& p : presets()) is_preset |= p.name == arg;
    if (!is_preset) throw Error(arg + ": no such config file or preset");
    cfg = preset_config(arg);
  }
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.no_ewc) cfg.merge.ewc_enabled = false;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(path.string() + ": write failed");
}

int cmd_run(const std::string& config, const std::string& out_dir, const Overrides& o,
            bool fork_only, const std::string& resume) {
  const RunConfig cfg = load(config, o);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  ExperimentOptions opts;
  if (cfg.algorithm == Algorithm::kFedFmc) {
    if (resume.empty()) opts.fork_checkpoint = dir / "fork.ckpt";
    else opts.resume_from = fs::path(resume);
  }
  opts.fork_only = fork_only;
  const ExperimentResult r = run_experiment(cfg, opts);

  emit_metrics(r.metrics, dir / "metrics.csv");
  write_text(dir / "report.txt", r.report);
  save_checkpoint(Checkpoint{r.final_model, r.metrics.empty() ? 0 : r.metrics.back().round, 0, {},
                             r.ledger.per_round()},
                  dir / "final.ckpt");
  std::cout << r.report;
  std::cout << "wrote " << (dir / "metrics.csv").string() << ", " << (dir / "report.txt").string()
            << "\n";
  const bool ok = r.updates_match && (!r.cost_check || r.cost_check->passed());
  return ok ? 0 : 1;
}

int cmd_verify(const std::string& config, const Overrides& o) {
  RunConfig cfg = load(config, o);
  ExperimentOptions opts;
  opts.fork_only = true;
  const ExperimentResult r = run_experiment(cfg, opts);
  const int N = cfg.num_devices();
  std::cout << "N = " << N << ", T = " << cfg.T << ", K = " << cfg.K << ", E = " << cfg.E << "\n";
  std::cout << "updates: measured " << r.measured_updates << ", E*K*T = " << r.analytic_updates
            << (r.updates_match ? "  PASS" : "  FAIL") << "\n";
  bool ok = r.updates_match;
  if (r.cost_check) {
    std::cout << "transfers: " << r.cost_check->summary()
              << (r.cost_check->passed() ? "  PASS" : "  FAIL") << "\n";
    ok = ok && r.cost_check->passed();
  } else {
    std::cout << "transfers: " << r.ledger.transfers(Phase::kFork)
              << " (bound not applicable to a non-default fork schedule)\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedFMC / FedAvg federated learning simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  std::string out_dir = "out";
  Seed seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override master_seed");
  app.add_option("--out", out_dir, "Output directory for run artifacts");
  app.add_flag("--no-ewc", o.no_ewc, "Merge without EWC (lambda forced to 0)");

  std::string config;
  bool fork_only = false;
  std::string resume;
  auto* run = app.add_subcommand("run", "Run an experiment and write metrics.csv and report.txt");
  run->add_option("config", config, "Config file or preset name")->required();
  run->add_flag("--fork-only", fork_only, "Stop after the fork phase");
  run->add_option("--resume", resume, "Resume the merge phase from a post-fork checkpoint");

  auto* verify = app.add_subcommand("verify-costs", "Run the fork phase and check the cost formulas");
  verify->add_option("config", config, "Config file or preset name")->required();

  auto* pre = app.add_subcommand("presets", "Bundled experiment presets");
  pre->require_subcommand(1);
  auto* list = pre->add_subcommand("list", "List presets");
  std::string preset_name;
  auto* show = pre->add_subcommand("show", "Print a preset's config");
  show->add_option("name", preset_name)->required();

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) o.seed = seed;

  try {
    if (*run) return cmd_run(config, out_dir, o, fork_only, resume);
    if (*verify) return cmd_verify(config, o);
    if (*list) {
      for (const auto& p : presets()) std::cout << p.name << "  " << p.description << "\n";
      return 0;
    }
    if (*show) {
      std::cout << find_preset(preset_name).config_text;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
