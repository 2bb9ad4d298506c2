#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedfmc/data.hpp"
#include "fedfmc/federation.hpp"
#include "fedfmc/learner.hpp"

namespace fedfmc {

enum class Algorithm { kFedAvg, kFedFmc };
enum class DatasetKind { kSynthetic, kIdx, kCsv };

std::string to_string(Algorithm a);
std::string to_string(DatasetKind d);

/// Everything a run needs. Built by parse_config; every field has an explicit
/// value after parsing.
struct RunConfig {
  Algorithm algorithm = Algorithm::kFedFmc;

  DatasetKind dataset = DatasetKind::kSynthetic;
  std::string data_path;    // CSV file or IDX images
  std::string labels_path;  // IDX labels
  int synthetic_classes = 3;
  int synthetic_feature_dim = 8;
  int synthetic_per_class = 600;
  double synthetic_separation = 4.0;
  int test_per_class = 100;  // balanced held-out set, evaluation only

  std::vector<ArchetypeSpec> archetypes;
  int devices_per_archetype = 4;
  int samples_per_device = 60;
  double validation_fraction = 0.2;

  int T = 25;  // fork rounds (FedAvg: total rounds)
  int K = 6;   // devices per round
  int E = 2;   // local epochs
  std::vector<int> hidden_dims{16};
  double learning_rate = 0.05;
  int batch_size = 10;

  ForkPolicy fork;
  MergePolicy merge;  // merge.ewc_enabled doubles as the EWC ablation switch

  Seed master_seed = 1;

  int num_devices() const {
    return devices_per_archetype * static_cast<int>(archetypes.size());
  }
  TrainConfig train_config() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Canonical `key = value` text listing every field; parse_config_text of
  /// the result reproduces this config.
  std::string to_text() const;
};

/// Strict `key = value` parser: '#' starts a comment, unknown and duplicate
/// keys are errors, and algorithm, dataset, archetypes, T and K are required.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace fedfmc
