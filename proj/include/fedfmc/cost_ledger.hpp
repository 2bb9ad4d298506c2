#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedfmc {

enum class Phase { kFedAvg, kFork, kMerge };

std::string to_string(Phase phase);

/// Exact counts of local work and model movement.
///
/// An update is one device training for one local epoch. A transfer is one
/// whole-model-sized vector sent between the server and a device in either
/// direction. Each round of a synchronous protocol is charged
///   K downloads + K uploads for the sampled devices, plus
///   one deploy per device that receives the new group model,
/// and every foreign group model a device evaluates during a fork round costs
/// one more transfer.
class CostLedger {
 public:
  struct RoundEntry {
    int round = 0;
    Phase phase = Phase::kFedAvg;
    std::int64_t updates_delta = 0;
    std::int64_t transfers_delta = 0;
  };

  /// Opens the entry for `round`; later charges accumulate into it.
  void begin_round(int round, Phase phase);
  void add_updates(std::int64_t n);
  void add_transfers(std::int64_t n);

  std::int64_t updates() const noexcept { return updates_; }
  std::int64_t transfers() const noexcept { return transfers_; }
  std::int64_t updates(Phase phase) const;
  std::int64_t transfers(Phase phase) const;
  const std::vector<RoundEntry>& per_round() const noexcept { return entries_; }

  /// Totals equal the sum of per-round deltas and no delta is negative.
  bool consistent() const;

  /// Rebuilds a ledger from stored entries (checkpoint restore).
  static CostLedger from_entries(std::vector<RoundEntry> entries);

 private:
  RoundEntry& current();

  std::int64_t updates_ = 0;
  std::int64_t transfers_ = 0;
  std::vector<RoundEntry> entries_;
};

/// E * K * T.
std::int64_t analytic_updates(std::int64_t E, std::int64_t K, std::int64_t T);

/// Worst-case transfers of a fork phase:
///   T(2K + N) + sum_{t=1}^{floor(T/4)} N (t - 1).
std::int64_t analytic_comm_bound(std::int64_t T, std::int64_t K, std::int64_t N);

/// Transfers of a fork phase in which no device ever leaves its group.
std::int64_t analytic_fedavg_transfers(std::int64_t T, std::int64_t K,
                                       std::int64_t N);

struct CostVerification {
  std::int64_t measured_transfers = 0;
  std::int64_t bound = 0;
  std::int64_t slack = 0;  // bound - measured
  bool within_bound = true;
  /// First round whose running transfer total exceeded the bound.
  std::optional<int> first_offending_round;

  bool base_term_checked = false;  // only for runs that never forked
  std::int64_t base_term = 0;
  bool base_term_equal = true;

  bool passed() const noexcept { return within_bound && base_term_equal; }
  std::string summary() const;
};

/// Checks the fork-phase (or FedAvg) transfers of `ledger` against the
/// analytic bound; merge rounds are not covered.
/// When `never_forked` is set the count must also equal T(2K + N) exactly.
CostVerification verify_against_bound(const CostLedger& ledger, std::int64_t T,
                                      std::int64_t K, std::int64_t N,
                                      bool never_forked);

}  // namespace fedfmc
