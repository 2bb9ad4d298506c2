#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <string>

#include "engine_internal.hpp"
#include "fedfmc/errors.hpp"
#include "fedfmc/federation.hpp"

namespace fedfmc {

bool merge_converged(std::span<const double> acc_window, const MergePolicy& policy) {
  if (acc_window.size() < static_cast<std::size_t>(policy.window)) return false;
  const auto recent = acc_window.last(static_cast<std::size_t>(policy.window));
  const double best = *std::max_element(recent.begin(), recent.end());
  const double mean =
      std::accumulate(recent.begin(), recent.end(), 0.0) / static_cast<double>(recent.size());
  return best - mean < policy.accuracy_gap;
}

namespace {

/// n_k-weighted mean of the Fisher diagonals each device computes locally at
/// `anchor`.
FisherDiag federated_fisher(const FederationState& state, const ModelParams& anchor,
                            const std::vector<int>& device_ids) {
  Vector acc = Vector::Zero(anchor.size());
  double total = 0;
  for (int id : device_ids) {
    const auto& d = state.devices[static_cast<std::size_t>(id)];
    acc += d.shard.n_k * compute_fisher_diag(anchor, d.shard.train).values;
    total += d.shard.n_k;
  }
  return FisherDiag{acc / total};
}

/// Pooled validation accuracy of the model the active devices hold.
double pooled_accuracy(const FederationState& state, const std::vector<int>& device_ids) {
  double correct = 0, seen = 0;
  for (int id : device_ids) {
    const auto& d = state.devices[static_cast<std::size_t>(id)];
    const double n = static_cast<double>(d.shard.validation.size());
    correct += d.last_accuracy() * n;
    seen += n;
  }
  return seen > 0 ? correct / seen : 0.0;
}

}  // namespace

ModelParams run_merge_consolidate(FederationState& state, const TrainConfig& cfg,
                                  const MergePolicy& policy,
                                  const RoundObserver& observer) {
  cfg.validate();
  policy.validate();
  if (state.groups.size() < 1) throw std::invalid_argument("no groups to merge");

  const std::vector<int> order = state.groups.ids();
  std::vector<int> active = state.groups.at(order.front()).members;
  ModelParams working = state.groups.at(order.front()).model;
  int phase_round = 0;

  for (std::size_t f = 1; f < order.size(); ++f) {
    const int incoming = order[f];
    const ModelParams anchor = working;
    const double lambda = policy.ewc_enabled ? 1.0 / static_cast<double>(f + 1) : 0.0;
    TrainConfig round_cfg = cfg;
    round_cfg.ewc_lambda = lambda;

    std::vector<double> acc_window;
    FisherDiag fisher;
    for (int i = 1; i <= policy.max_rounds_per_group; ++i) {
      ++state.round;
      ++phase_round;
      state.ledger.begin_round(state.round, Phase::kMerge);

      if (i == 1) {
        if (lambda > 0) {
          fisher = federated_fisher(state, anchor, active);
          state.ledger.add_transfers(static_cast<std::int64_t>(active.size()));
        } else {
          fisher.values = Vector::Zero(anchor.size());
        }
        const auto& joining = state.groups.at(incoming).members;
        for (int id : joining) state.devices[static_cast<std::size_t>(id)].current_model = working;
        state.ledger.add_transfers(static_cast<std::int64_t>(joining.size()));
        std::vector<int> merged;
        std::merge(active.begin(), active.end(), joining.begin(), joining.end(),
                   std::back_inserter(merged));
        active = std::move(merged);
      }

      const int take = std::max(
          1, static_cast<int>(std::ceil(policy.participation_fraction *
                                        static_cast<double>(active.size()) - 1e-9)));
      const auto picks = detail::sample_without_replacement(
          static_cast<int>(active.size()), take,
          derive_seed(state.master_seed, SeedPurpose::kMergeSample,
                      {static_cast<std::uint64_t>(state.round)}));

      std::vector<ModelParams> trained;
      std::vector<int> counts;
      for (int p : picks) {
        const int id = active[static_cast<std::size_t>(p)];
        const auto& d = state.devices[static_cast<std::size_t>(id)];
        const Seed seed = derive_seed(state.master_seed, SeedPurpose::kMergeTrain,
                                      {static_cast<std::uint64_t>(state.round),
                                       static_cast<std::uint64_t>(id)});
        try {
          trained.push_back(
              ewc_sgd_epochs(d.current_model, d.shard.train, anchor, fisher, round_cfg, seed));
        } catch (const TrainingDivergence& e) {
          throw TrainingDivergence("merge round " + std::to_string(state.round) +
                                       ", device " + std::to_string(id) + ": " + e.what(),
                                   e.epoch());
        }
        counts.push_back(d.shard.n_k);
      }
      state.ledger.add_updates(std::int64_t{cfg.local_epochs} * take);
      state.ledger.add_transfers(2 * std::int64_t{take});
      // Anchor and Fisher diagonal travel to every EWC trainer.
      if (lambda > 0) state.ledger.add_transfers(2 * std::int64_t{take});

      working = average_weights(trained, counts);
      for (int id : active) state.devices[static_cast<std::size_t>(id)].current_model = working;
      state.ledger.add_transfers(static_cast<std::int64_t>(active.size()));
      internal::evaluate_devices(state, active);
      acc_window.push_back(pooled_accuracy(state, active));

      const bool done =
          merge_converged(acc_window, policy) || i == policy.max_rounds_per_group;
      check_invariants(state, false);
      if (observer) {
        RoundEvent ev{Phase::kMerge, state.round, phase_round, state};
        ev.working_model = &working;
        ev.merging_group = incoming;
        ev.group_merge_complete = done;
        ev.working_accuracy = acc_window.back();
        observer(ev);
      }
      if (done) break;
    }
  }
  return working;
}

}  // namespace fedfmc
