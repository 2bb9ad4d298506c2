#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedfmc/checkpoint.hpp"
#include "fedfmc/config.hpp"
#include "fedfmc/cost_ledger.hpp"
#include "fedfmc/data.hpp"
#include "fedfmc/federation.hpp"
#include "fedfmc/metrics.hpp"

namespace fedfmc {

/// Data and initial federation for a config: the balanced test set is split
/// off the source before any device sees it.
struct Environment {
  LabeledDataset test;
  std::vector<LabeledDataset> archetype_test;  // test examples of each archetype's labels
  FederationState state;
  ModelParams initial_model;
};

Environment build_environment(const RunConfig& cfg);

struct ForkSummary {
  int group_count = 0;
  /// Share of devices whose group's majority archetype is their own, percent.
  double purity = 0.0;
  bool ever_forked = false;
  std::vector<std::vector<int>> group_members;  // by ascending group id
};

struct ExperimentResult {
  ModelParams final_model;
  std::vector<MetricsRow> metrics;
  CostLedger ledger;

  ForkSummary fork;  // fedfmc only
  double final_test_acc = 0.0;
  std::vector<double> final_archetype_acc;

  /// Updates of the fork phase (FedAvg: the whole run) versus E*K*T.
  std::int64_t measured_updates = 0;
  std::int64_t analytic_updates = 0;
  bool updates_match = false;
  /// Set when the fork schedule is the default one the bound assumes.
  std::optional<CostVerification> cost_check;

  std::string report;  // human-readable end-of-run report
};

struct ExperimentOptions {
  /// fedfmc: save the post-fork state here.
  std::optional<std::filesystem::path> fork_checkpoint;
  /// fedfmc: skip the fork phase and resume from this post-fork checkpoint.
  std::optional<std::filesystem::path> resume_from;
  /// fedfmc: stop after the fork phase.
  bool fork_only = false;
  /// Extra per-round hook, called after the harness records its row.
  RoundObserver observer;
};

ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& options = {});

}  // namespace fedfmc
