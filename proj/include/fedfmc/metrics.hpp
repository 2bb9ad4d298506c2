#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedfmc/cost_ledger.hpp"

namespace fedfmc {

struct DeviceMetrics {
  int device_id = 0;
  int group_id = 0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  int archetype_id = 0;
  /// Device's current model on the held-out test examples of its archetype's labels.
  double archetype_test_acc = 0.0;
  /// Device's current model on the whole balanced test set.
  double global_test_acc = 0.0;
};

/// One completed round of one phase.
struct MetricsRow {
  int round = 0;
  Phase phase = Phase::kFedAvg;
  int group_count = 0;
  std::vector<DeviceMetrics> devices;
  /// Reference model accuracy per archetype on the balanced test set: the
  /// global model (FedAvg), the working model (merge), or the mean over each
  /// archetype's devices (fork).
  std::vector<double> archetype_accuracy;
  /// FedAvg global or merge working model on the full balanced test set.
  double reference_test_acc = 0.0;
  /// Group being merged in (merge phase), otherwise -1.
  int merging_group = -1;
  bool group_merge_complete = false;
  std::int64_t updates_delta = 0;
  std::int64_t transfers_delta = 0;
};

inline constexpr const char* kMetricsHeader =
    "round,phase,group_count,device_id,group_id,val_loss,val_acc,archetype_id,"
    "archetype_test_acc,global_test_acc,updates_delta,transfers_delta";

/// CSV text: the header, then one line per device per row.
std::string format_metrics(const std::vector<MetricsRow>& rows);

/// Writes format_metrics(rows) to `path`. Throws Error naming the path on I/O
/// failure and std::invalid_argument for an empty row list.
void emit_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

}  // namespace fedfmc
