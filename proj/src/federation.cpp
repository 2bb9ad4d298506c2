#include "fedfmc/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "engine_internal.hpp"
#include "fedfmc/errors.hpp"

namespace fedfmc {

int GroupTable::create(ModelParams model, int created_round) {
  const int id = next_id_++;
  groups_.emplace(id, Group{{}, std::move(model), created_round});
  return id;
}

void GroupTable::insert(int id, Group group) {
  if (groups_.contains(id)) throw std::invalid_argument("duplicate group id");
  groups_.emplace(id, std::move(group));
  next_id_ = std::max(next_id_, id + 1);
}

std::vector<int> GroupTable::ids() const {
  std::vector<int> out;
  out.reserve(groups_.size());
  for (const auto& [id, g] : groups_) out.push_back(id);
  return out;
}

std::vector<int> GroupTable::retire_empty() {
  std::vector<int> retired;
  for (auto it = groups_.begin(); it != groups_.end();) {
    if (it->second.members.empty()) {
      retired.push_back(it->first);
      it = groups_.erase(it);
    } else {
      ++it;
    }
  }
  return retired;
}

void ForkPolicy::validate() const {
  if (!(h_f > 0)) throw std::invalid_argument("h_f must be > 0");
  if (!(sigma_floor >= 0)) throw std::invalid_argument("sigma_floor must be >= 0");
  if (warmup_rounds < 1) throw std::invalid_argument("warmup_rounds must be >= 1");
  if (cooldown_from_end < 0) throw std::invalid_argument("cooldown_from_end must be >= 0");
  if (min_gap < 1) throw std::invalid_argument("min_gap must be >= 1");
}

void MergePolicy::validate() const {
  if (max_rounds_per_group < 1) throw std::invalid_argument("max_rounds_per_group must be >= 1");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (!(accuracy_gap >= 0)) throw std::invalid_argument("accuracy_gap must be >= 0");
  if (!(participation_fraction > 0 && participation_fraction <= 1))
    throw std::invalid_argument("participation_fraction must lie in (0, 1]");
}

FederationState FederationState::create(std::vector<DeviceShard> shards,
                                        const ModelParams& initial,
                                        Seed master_seed) {
  if (shards.empty()) throw std::invalid_argument("no devices");
  FederationState state;
  state.master_seed = master_seed;
  const int group = state.groups.create(initial, 0);
  for (std::size_t i = 0; i < shards.size(); ++i) {
    DeviceState d;
    d.device_id = static_cast<int>(i);
    d.shard = std::move(shards[i]);
    d.group_id = group;
    d.current_model = initial;
    state.groups.at(group).members.push_back(d.device_id);
    state.devices.push_back(std::move(d));
  }
  return state;
}

ModelParams average_weights(std::span<const ModelParams> models,
                            std::span<const int> sample_counts) {
  if (models.empty()) throw std::invalid_argument("average of no models");
  if (models.size() != sample_counts.size())
    throw std::invalid_argument("models and sample counts differ in length");
  double total = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (!models[i].same_layout(models.front()) || models[i].size() != models.front().size())
      throw DimensionError("averaged models differ in layout");
    if (sample_counts[i] < 1) throw std::invalid_argument("sample counts must be >= 1");
    total += sample_counts[i];
  }
  Vector acc = Vector::Zero(models.front().size());
  for (std::size_t i = 0; i < models.size(); ++i)
    acc += (sample_counts[i] / total) * models[i].values;
  // Rounding can push a coordinate a hair outside the inputs' range.
  Vector lo = models.front().values, hi = models.front().values;
  for (const auto& m : models.subspan(1)) {
    lo = lo.cwiseMin(m.values);
    hi = hi.cwiseMax(m.values);
  }
  return ModelParams(models.front().layer_dims, acc.cwiseMax(lo).cwiseMin(hi));
}

namespace detail {

std::vector<int> sample_without_replacement(int n, int k, Seed seed) {
  if (k < 0 || k > n) throw std::invalid_argument("cannot sample k of n");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double population_stddev(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

}  // namespace detail

namespace internal {

std::vector<ModelParams> train_devices(const FederationState& state,
                                       const std::vector<int>& device_ids,
                                       const TrainConfig& cfg, SeedPurpose purpose) {
  std::vector<ModelParams> out;
  out.reserve(device_ids.size());
  for (int id : device_ids) {
    const auto& d = state.devices.at(static_cast<std::size_t>(id));
    const Seed seed = derive_seed(state.master_seed, purpose,
                                  {static_cast<std::uint64_t>(state.round),
                                   static_cast<std::uint64_t>(id)});
    try {
      out.push_back(sgd_epochs(d.current_model, d.shard.train, cfg, seed));
    } catch (const TrainingDivergence& e) {
      throw TrainingDivergence("round " + std::to_string(state.round) + ", device " +
                                   std::to_string(id) + ": " + e.what(),
                               e.epoch());
    }
  }
  return out;
}

void evaluate_devices(FederationState& state, const std::vector<int>& device_ids) {
  for (int id : device_ids) {
    auto& d = state.devices.at(static_cast<std::size_t>(id));
    const EvalResult r = forward_eval(d.current_model, d.shard.validation);
    d.loss_history.emplace_back(state.round, r.mean_loss);
    d.acc_history.emplace_back(state.round, r.accuracy);
  }
}

std::vector<int> all_device_ids(const FederationState& state) {
  std::vector<int> ids(state.devices.size());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace internal

ModelParams run_fedavg(FederationState& state, int T, int K,
                       const TrainConfig& cfg, const RoundObserver& observer) {
  cfg.validate();
  const int N = state.num_devices();
  if (K < 1 || K > N) throw std::invalid_argument("K must lie in [1, N]");
  if (T < 0) throw std::invalid_argument("T must be >= 0");
  if (state.groups.size() != 1)
    throw std::invalid_argument("FedAvg needs all devices in one group");
  const int gid = state.groups.ids().front();
  const auto everyone = internal::all_device_ids(state);

  for (int t = 1; t <= T; ++t) {
    ++state.round;
    state.ledger.begin_round(state.round, Phase::kFedAvg);
    const auto sampled = detail::sample_without_replacement(
        N, K,
        derive_seed(state.master_seed, SeedPurpose::kSampleDevices,
                    {static_cast<std::uint64_t>(state.round)}));
    const auto trained =
        internal::train_devices(state, sampled, cfg, SeedPurpose::kLocalTrain);
    state.ledger.add_updates(std::int64_t{cfg.local_epochs} * K);
    state.ledger.add_transfers(2 * std::int64_t{K});

    std::vector<int> counts;
    for (int id : sampled) counts.push_back(state.devices[static_cast<std::size_t>(id)].shard.n_k);
    Group& g = state.groups.at(gid);
    g.model = average_weights(trained, counts);
    for (auto& d : state.devices) d.current_model = g.model;
    state.ledger.add_transfers(N);

    internal::evaluate_devices(state, everyone);
    check_invariants(state, true);
    if (observer) observer(RoundEvent{Phase::kFedAvg, state.round, t, state});
  }
  return state.groups.at(gid).model;
}

void check_invariants(const FederationState& state, bool synced) {
  const auto fail = [&](const std::string& what) {
    throw std::logic_error("round " + std::to_string(state.round) + ": " + what);
  };
  std::vector<int> seen(state.devices.size(), 0);
  for (const auto& [id, g] : state.groups) {
    if (g.members.empty()) fail("group " + std::to_string(id) + " is empty");
    if (!std::is_sorted(g.members.begin(), g.members.end())) fail("unsorted member list");
    for (int m : g.members) {
      if (m < 0 || static_cast<std::size_t>(m) >= state.devices.size())
        fail("group " + std::to_string(id) + " lists unknown device");
      if (state.devices[static_cast<std::size_t>(m)].group_id != id)
        fail("device " + std::to_string(m) + " disagrees with group table");
      ++seen[static_cast<std::size_t>(m)];
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const auto& d = state.devices[i];
    if (seen[i] != 1) fail("device " + std::to_string(i) + " is in " + std::to_string(seen[i]) + " groups");
    if (d.device_id != static_cast<int>(i)) fail("device id out of place");
    if (!state.groups.contains(d.group_id)) fail("device points at retired group");
    const ModelParams& held = d.current_model;
    if (held.size() != parameter_count(held.layer_dims) || !held.all_finite())
      fail("device " + std::to_string(i) + " holds a malformed model");
    if (synced && !(held == state.groups.at(d.group_id).model))
      fail("device " + std::to_string(i) + " does not hold its group model");
  }
  if (!state.ledger.consistent()) fail("ledger totals disagree with per-round deltas");
  const auto& entries = state.ledger.per_round();
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].round < entries[i - 1].round) fail("ledger rounds decreased");
}

}  // namespace fedfmc
