#include "fedfmc/cost_ledger.hpp"

#include <sstream>
#include <stdexcept>

namespace fedfmc {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kFedAvg:
      return "fedavg";
    case Phase::kFork:
      return "fork";
    case Phase::kMerge:
      return "merge";
  }
  return "unknown";
}

void CostLedger::begin_round(int round, Phase phase) {
  if (!entries_.empty() && round < entries_.back().round)
    throw std::logic_error("ledger rounds must not decrease");
  entries_.push_back({round, phase, 0, 0});
}

CostLedger::RoundEntry& CostLedger::current() {
  if (entries_.empty()) throw std::logic_error("ledger charge before begin_round");
  return entries_.back();
}

void CostLedger::add_updates(std::int64_t n) {
  if (n < 0) throw std::invalid_argument("negative update charge");
  current().updates_delta += n;
  updates_ += n;
}

void CostLedger::add_transfers(std::int64_t n) {
  if (n < 0) throw std::invalid_argument("negative transfer charge");
  current().transfers_delta += n;
  transfers_ += n;
}

std::int64_t CostLedger::updates(Phase phase) const {
  std::int64_t total = 0;
  for (const auto& e : entries_)
    if (e.phase == phase) total += e.updates_delta;
  return total;
}

std::int64_t CostLedger::transfers(Phase phase) const {
  std::int64_t total = 0;
  for (const auto& e : entries_)
    if (e.phase == phase) total += e.transfers_delta;
  return total;
}

bool CostLedger::consistent() const {
  std::int64_t u = 0, t = 0;
  for (const auto& e : entries_) {
    if (e.updates_delta < 0 || e.transfers_delta < 0) return false;
    u += e.updates_delta;
    t += e.transfers_delta;
  }
  return u == updates_ && t == transfers_;
}

CostLedger CostLedger::from_entries(std::vector<RoundEntry> entries) {
  CostLedger ledger;
  for (const auto& e : entries) {
    ledger.begin_round(e.round, e.phase);
    ledger.add_updates(e.updates_delta);
    ledger.add_transfers(e.transfers_delta);
  }
  return ledger;
}

std::int64_t analytic_updates(std::int64_t E, std::int64_t K, std::int64_t T) {
  if (E < 0 || K < 0 || T < 0) throw std::invalid_argument("negative argument");
  return E * K * T;
}

std::int64_t analytic_fedavg_transfers(std::int64_t T, std::int64_t K,
                                       std::int64_t N) {
  if (T < 0 || K < 0 || N < 0) throw std::invalid_argument("negative argument");
  return T * (2 * K + N);
}

std::int64_t analytic_comm_bound(std::int64_t T, std::int64_t K, std::int64_t N) {
  std::int64_t bound = analytic_fedavg_transfers(T, K, N);
  for (std::int64_t t = 1; t <= T / 4; ++t) bound += N * (t - 1);
  return bound;
}

std::string CostVerification::summary() const {
  std::ostringstream os;
  os << "transfers measured=" << measured_transfers << " bound=" << bound
     << " slack=" << slack << (within_bound ? " [ok]" : " [VIOLATED]");
  if (first_offending_round) os << " first_offending_round=" << *first_offending_round;
  if (base_term_checked)
    os << "; no-fork base term " << base_term
       << (base_term_equal ? " [equal]" : " [MISMATCH]");
  return os.str();
}

CostVerification verify_against_bound(const CostLedger& ledger, std::int64_t T,
                                      std::int64_t K, std::int64_t N,
                                      bool never_forked) {
  CostVerification v;
  v.bound = analytic_comm_bound(T, K, N);
  std::int64_t running = 0;
  for (const auto& e : ledger.per_round()) {
    if (e.phase == Phase::kMerge) continue;
    running += e.transfers_delta;
    if (running > v.bound && !v.first_offending_round) v.first_offending_round = e.round;
  }
  v.measured_transfers = running;
  v.slack = v.bound - running;
  v.within_bound = running <= v.bound;
  if (never_forked) {
    v.base_term_checked = true;
    v.base_term = analytic_fedavg_transfers(T, K, N);
    v.base_term_equal = running == v.base_term;
  }
  return v;
}

}  // namespace fedfmc
