#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedfmc/cost_ledger.hpp"
#include "fedfmc/data.hpp"
#include "fedfmc/learner.hpp"
#include "fedfmc/seed.hpp"

namespace fedfmc {

/// One simulated edge device. It owns exactly one model at any time.
struct DeviceState {
  int device_id = 0;
  DeviceShard shard;
  int group_id = 0;
  ModelParams current_model;
  std::vector<std::pair<int, double>> loss_history;  // (round, validation loss)
  std::vector<std::pair<int, double>> acc_history;   // (round, validation acc %)

  double last_loss() const { return loss_history.empty() ? 0.0 : loss_history.back().second; }
  double last_accuracy() const { return acc_history.empty() ? 0.0 : acc_history.back().second; }
};

struct Group {
  std::vector<int> members;  // ascending device ids
  ModelParams model;
  int created_round = 0;
};

/// Live groups keyed by id. Ids are handed out monotonically and never reused.
class GroupTable {
 public:
  int create(ModelParams model, int created_round);
  /// Re-inserts a group with a known id (checkpoint restore).
  void insert(int id, Group group);

  Group& at(int id) { return groups_.at(id); }
  const Group& at(int id) const { return groups_.at(id); }
  bool contains(int id) const { return groups_.contains(id); }
  std::size_t size() const noexcept { return groups_.size(); }
  std::vector<int> ids() const;
  int next_id() const noexcept { return next_id_; }
  void set_next_id(int id) { next_id_ = id; }

  /// Drops groups with no members; returns the retired ids.
  std::vector<int> retire_empty();

  auto begin() const { return groups_.begin(); }
  auto end() const { return groups_.end(); }

 private:
  std::map<int, Group> groups_;
  int next_id_ = 0;
};

struct ForkPolicy {
  double h_f = 1.0;
  /// Lower bound on the spread a device's excess loss is compared against, in
  /// nats. Zero gives the bare h_f * sigma rule.
  double sigma_floor = 0.3;
  int warmup_rounds = 5;
  int cooldown_from_end = 5;
  int min_gap = 4;

  void validate() const;
  /// True for the default eligibility schedule the analytic bound assumes.
  bool default_schedule() const {
    return warmup_rounds == 5 && cooldown_from_end == 5 && min_gap == 4;
  }
};

struct MergePolicy {
  int max_rounds_per_group = 15;
  int window = 5;
  double accuracy_gap = 1.0;  // percentage points
  double participation_fraction = 0.5;
  bool ewc_enabled = true;

  void validate() const;
};

struct FederationState {
  std::vector<DeviceState> devices;
  GroupTable groups;
  int round = 0;
  CostLedger ledger;
  Seed master_seed = 0;

  /// All devices in group 0, each holding a copy of `initial`.
  static FederationState create(std::vector<DeviceShard> shards,
                                const ModelParams& initial, Seed master_seed);

  int num_devices() const noexcept { return static_cast<int>(devices.size()); }
};

/// Emitted after every completed round.
struct RoundEvent {
  Phase phase;
  int round;                // global round counter
  int phase_round;          // 1-based within the phase
  const FederationState& state;
  /// Model being consolidated (merge phase only).
  const ModelParams* working_model = nullptr;
  /// Group currently being merged in (merge phase only).
  int merging_group = -1;
  /// Merge phase: set on the last round of the current group's merge loop.
  bool group_merge_complete = false;
  /// Merge phase: pooled validation accuracy of the working model.
  double working_accuracy = 0.0;
};

using RoundObserver = std::function<void(const RoundEvent&)>;

/// Coordinate-wise mean weighted by sample_counts / sum(sample_counts).
ModelParams average_weights(std::span<const ModelParams> models,
                            std::span<const int> sample_counts);

/// FederatedAveraging for T rounds with K devices sampled per round.
ModelParams run_fedavg(FederationState& state, int T, int K,
                       const TrainConfig& cfg, const RoundObserver& observer = {});

/// Round t (1-based) of T may fork when it is past the warm-up, at least
/// cooldown_from_end rounds before the end, and min_gap after the previous
/// eligible round.
bool fork_eligible(int t, int T, std::optional<int> last_eligible,
                   const ForkPolicy& policy = {});

/// All eligible rounds of a T-round fork phase.
std::vector<int> eligible_rounds(int T, const ForkPolicy& policy = {});

struct ForkDecision {
  enum class Kind { kStay, kMoveTo, kNewGroup };
  Kind kind = Kind::kStay;
  int target_group = -1;        // kMoveTo only
  int foreign_evaluations = 0;  // group models other than its own it ran

  static ForkDecision stay() { return {}; }
};

/// Decides where `device` goes. `group_losses` maps every member of the
/// device's group to its validation loss this round. A device whose excess
/// over the group minimum exceeds h_f * max(sigma, sigma_floor) runs every
/// live group model on its validation data and joins the best one (lowest id
/// on ties); if that is its own group it asks for a new group.
ForkDecision fork_decision(const DeviceState& device,
                           const std::map<int, double>& group_losses,
                           const GroupTable& groups, const ForkPolicy& policy);

/// Fork phase: T rounds of per-group FedAvg with fork decisions on eligible
/// rounds. Devices must start in a single group.
FederationState& run_fork_phase(FederationState& state, int T, int K,
                                const TrainConfig& cfg, const ForkPolicy& policy,
                                const RoundObserver& observer = {});

/// max(window) - mean(window) < accuracy_gap, once `policy.window` values exist.
bool merge_converged(std::span<const double> acc_window, const MergePolicy& policy);

/// Folds the groups, in id order, into one model with EWC anchoring.
ModelParams run_merge_consolidate(FederationState& state, const TrainConfig& cfg,
                                  const MergePolicy& policy,
                                  const RoundObserver& observer = {});

/// Throws std::logic_error if the device/group partition, the one-model rule or
/// the ledger bookkeeping is broken. With `synced`, every device must hold its
/// group's model.
void check_invariants(const FederationState& state, bool synced);

namespace detail {

/// K distinct indices from [0, n), ascending.
std::vector<int> sample_without_replacement(int n, int k, Seed seed);

/// Population standard deviation.
double population_stddev(const std::vector<double>& values);

}  // namespace detail

}  // namespace fedfmc
