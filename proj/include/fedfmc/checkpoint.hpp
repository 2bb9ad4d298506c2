#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fedfmc/cost_ledger.hpp"
#include "fedfmc/federation.hpp"
#include "fedfmc/learner.hpp"

namespace fedfmc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct GroupRecord {
  int id = 0;
  int created_round = 0;
  std::vector<int> members;
  Vector values;  // group model, same layout as Checkpoint::model

  friend bool operator==(const GroupRecord&, const GroupRecord&) = default;
};

/// A model plus the group table and round/ledger position it belongs to.
struct Checkpoint {
  ModelParams model;
  int round = 0;
  int next_group_id = 0;
  std::vector<GroupRecord> groups;
  std::vector<CostLedger::RoundEntry> ledger;
};

/// Little-endian binary:
///   "FMC1" | u32 version | u32 n_dims | i32 dims[n_dims]
///   | u64 n_params | f64 params[n_params]
///   | i32 round | i32 next_group_id
///   | u32 n_groups | { i32 id | i32 created_round | u32 n_members
///                    | i32 members[n_members] | f64 params[n_params] }
///   | u32 n_entries | { i32 round | u8 phase | i64 updates | i64 transfers }
/// Written to a temporary file and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws CheckpointError on bad magic, version mismatch, truncation, trailing
/// bytes or a layout mismatch; nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const FederationState& state, const ModelParams& model);

/// Replaces the group table, round and ledger of `state` (whose devices must
/// match the snapshot) and gives each device its group's model.
void restore_into(const Checkpoint& ckpt, FederationState& state);

}  // namespace fedfmc
