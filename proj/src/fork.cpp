#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>

#include "engine_internal.hpp"
#include "fedfmc/federation.hpp"

namespace fedfmc {

bool fork_eligible(int t, int T, std::optional<int> last_eligible,
                   const ForkPolicy& policy) {
  if (t < policy.warmup_rounds + 1) return false;
  if (t > T - policy.cooldown_from_end) return false;
  return !last_eligible || t - *last_eligible >= policy.min_gap;
}

std::vector<int> eligible_rounds(int T, const ForkPolicy& policy) {
  std::vector<int> out;
  std::optional<int> last;
  for (int t = 1; t <= T; ++t) {
    if (fork_eligible(t, T, last, policy)) {
      out.push_back(t);
      last = t;
    }
  }
  return out;
}

ForkDecision fork_decision(const DeviceState& device,
                           const std::map<int, double>& group_losses,
                           const GroupTable& groups, const ForkPolicy& policy) {
  const auto own = group_losses.find(device.device_id);
  if (own == group_losses.end())
    throw std::invalid_argument("device loss missing from its group's losses");

  std::vector<double> losses;
  losses.reserve(group_losses.size());
  for (const auto& [id, loss] : group_losses) losses.push_back(loss);
  const double minimum = *std::min_element(losses.begin(), losses.end());
  const double spread = std::max(detail::population_stddev(losses), policy.sigma_floor);
  const double excess = own->second - minimum;
  // Written so that h_f = inf with zero spread (NaN threshold) stays put.
  if (!(excess > policy.h_f * spread)) return ForkDecision::stay();

  ForkDecision decision;
  int best_group = -1;
  double best_loss = std::numeric_limits<double>::infinity();
  for (const auto& [id, group] : groups) {
    if (id != device.group_id) ++decision.foreign_evaluations;
    const double loss = forward_eval(group.model, device.shard.validation).mean_loss;
    if (best_group < 0 || loss < best_loss) {
      best_group = id;
      best_loss = loss;
    }
  }
  if (best_group == device.group_id) {
    decision.kind = ForkDecision::Kind::kNewGroup;
  } else {
    decision.kind = ForkDecision::Kind::kMoveTo;
    decision.target_group = best_group;
  }
  return decision;
}

namespace {

/// Applies every decision of the round at once. All devices leaving the same
/// source group for a new group share one new group seeded with the source
/// group's model.
void commit_fork_decisions(FederationState& state,
                           const std::vector<ForkDecision>& decisions) {
  std::map<int, std::vector<int>> new_group_requests;  // source group -> devices
  std::vector<std::pair<int, int>> moves;             // device -> target group
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto id = static_cast<int>(i);
    switch (decisions[i].kind) {
      case ForkDecision::Kind::kStay:
        break;
      case ForkDecision::Kind::kMoveTo:
        moves.emplace_back(id, decisions[i].target_group);
        break;
      case ForkDecision::Kind::kNewGroup:
        new_group_requests[state.devices[i].group_id].push_back(id);
        break;
    }
  }
  for (const auto& [source, devices] : new_group_requests) {
    const int created = state.groups.create(state.groups.at(source).model, state.round);
    // Seeding the new group moves one model.
    state.ledger.add_transfers(1);
    for (int d : devices) moves.emplace_back(d, created);
  }
  for (const auto& [device_id, target] : moves) {
    auto& device = state.devices[static_cast<std::size_t>(device_id)];
    auto& from = state.groups.at(device.group_id).members;
    from.erase(std::find(from.begin(), from.end(), device_id));
    auto& to = state.groups.at(target).members;
    to.insert(std::upper_bound(to.begin(), to.end(), device_id), device_id);
    device.group_id = target;
    device.current_model = state.groups.at(target).model;
  }
  state.groups.retire_empty();
}

}  // namespace

FederationState& run_fork_phase(FederationState& state, int T, int K,
                                const TrainConfig& cfg, const ForkPolicy& policy,
                                const RoundObserver& observer) {
  cfg.validate();
  policy.validate();
  const int N = state.num_devices();
  if (K < 1 || K > N) throw std::invalid_argument("K must lie in [1, N]");
  if (T < 0) throw std::invalid_argument("T must be >= 0");
  if (state.groups.size() != 1)
    throw std::invalid_argument("fork phase must start from a single group");
  const auto everyone = internal::all_device_ids(state);

  std::optional<int> last_eligible;
  for (int t = 1; t <= T; ++t) {
    ++state.round;
    state.ledger.begin_round(state.round, Phase::kFork);

    const auto sampled = detail::sample_without_replacement(
        N, K,
        derive_seed(state.master_seed, SeedPurpose::kSampleDevices,
                    {static_cast<std::uint64_t>(state.round)}));
    const auto trained =
        internal::train_devices(state, sampled, cfg, SeedPurpose::kLocalTrain);
    state.ledger.add_updates(std::int64_t{cfg.local_epochs} * K);
    state.ledger.add_transfers(2 * std::int64_t{K});

    // Per-group FedAvg over the members that trained this round; groups with
    // no trainers keep their model.
    std::map<int, std::pair<std::vector<ModelParams>, std::vector<int>>> updates;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      const auto& d = state.devices[static_cast<std::size_t>(sampled[i])];
      auto& [models, counts] = updates[d.group_id];
      models.push_back(trained[i]);
      counts.push_back(d.shard.n_k);
    }
    for (auto& [gid, batch] : updates)
      state.groups.at(gid).model = average_weights(batch.first, batch.second);
    for (auto& d : state.devices) d.current_model = state.groups.at(d.group_id).model;
    state.ledger.add_transfers(N);
    internal::evaluate_devices(state, everyone);

    if (fork_eligible(t, T, last_eligible, policy)) {
      last_eligible = t;
      std::map<int, std::map<int, double>> losses_by_group;
      for (const auto& d : state.devices)
        losses_by_group[d.group_id][d.device_id] = d.last_loss();
      std::vector<ForkDecision> decisions;
      decisions.reserve(state.devices.size());
      for (const auto& d : state.devices) {
        decisions.push_back(
            fork_decision(d, losses_by_group.at(d.group_id), state.groups, policy));
        state.ledger.add_transfers(decisions.back().foreign_evaluations);
      }
      commit_fork_decisions(state, decisions);
    }

    check_invariants(state, true);
    if (observer) observer(RoundEvent{Phase::kFork, state.round, t, state});
  }
  return state;
}

}  // namespace fedfmc
