#include "fedfmc/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "fedfmc/errors.hpp"

namespace fedfmc {

namespace {

std::vector<int> archetype_labels(const RunConfig& cfg) {
  std::set<int> labels;
  for (const auto& a : cfg.archetypes) labels.insert(a.label_set.begin(), a.label_set.end());
  return {labels.begin(), labels.end()};
}

LabeledDataset load_source(const RunConfig& cfg) {
  switch (cfg.dataset) {
    case DatasetKind::kSynthetic:
      return gen_synthetic(cfg.synthetic_classes, cfg.synthetic_feature_dim,
                           cfg.synthetic_per_class, cfg.synthetic_separation,
                           derive_seed(cfg.master_seed, SeedPurpose::kSynthetic));
    case DatasetKind::kCsv:
      return load_dataset(cfg.data_path, DatasetFormat::kCsv);
    case DatasetKind::kIdx:
      return load_dataset(cfg.data_path, DatasetFormat::kIdx, cfg.labels_path);
  }
  throw Error("unknown dataset kind");
}

/// Test-set accuracies of one model, memoised on the model's values since most
/// devices share their group's model.
class TestScorer {
 public:
  explicit TestScorer(const Environment& env) : env_(env) {}

  struct Scores {
    double global = 0.0;
    std::vector<double> per_archetype;
  };

  const Scores& score(const ModelParams& model) {
    for (const auto& [m, s] : cache_)
      if (m == model) return s;
    Scores s;
    s.global = forward_eval(model, env_.test).accuracy;
    for (const auto& subset : env_.archetype_test)
      s.per_archetype.push_back(forward_eval(model, subset).accuracy);
    cache_.emplace_back(model, std::move(s));
    return cache_.back().second;
  }

 private:
  const Environment& env_;
  std::vector<std::pair<ModelParams, Scores>> cache_;
};

MetricsRow make_row(const Environment& env, const RoundEvent& ev) {
  const FederationState& state = ev.state;
  TestScorer scorer(env);
  MetricsRow row;
  row.round = ev.round;
  row.phase = ev.phase;
  row.group_count = static_cast<int>(state.groups.size());
  row.merging_group = ev.merging_group;
  row.group_merge_complete = ev.group_merge_complete;
  const auto& entry = state.ledger.per_round().back();
  row.updates_delta = entry.updates_delta;
  row.transfers_delta = entry.transfers_delta;

  const std::size_t archetypes = env.archetype_test.size();
  std::vector<double> arch_sum(archetypes, 0.0);
  std::vector<int> arch_n(archetypes, 0);
  double global_sum = 0.0;
  for (const auto& d : state.devices) {
    const auto& s = scorer.score(d.current_model);
    DeviceMetrics m;
    m.device_id = d.device_id;
    m.group_id = d.group_id;
    m.val_loss = d.last_loss();
    m.val_acc = d.last_accuracy();
    m.archetype_id = d.shard.archetype_id;
    m.archetype_test_acc = s.per_archetype[static_cast<std::size_t>(d.shard.archetype_id)];
    m.global_test_acc = s.global;
    row.devices.push_back(m);
    arch_sum[static_cast<std::size_t>(m.archetype_id)] += m.archetype_test_acc;
    ++arch_n[static_cast<std::size_t>(m.archetype_id)];
    global_sum += s.global;
  }

  const ModelParams* reference = ev.working_model;
  if (ev.phase == Phase::kFedAvg) reference = &state.devices.front().current_model;
  if (reference) {
    const auto& s = scorer.score(*reference);
    row.archetype_accuracy = s.per_archetype;
    row.reference_test_acc = s.global;
  } else {
    for (std::size_t a = 0; a < archetypes; ++a)
      row.archetype_accuracy.push_back(arch_n[a] ? arch_sum[a] / arch_n[a] : 0.0);
    row.reference_test_acc = global_sum / static_cast<double>(state.devices.size());
  }
  return row;
}

ForkSummary summarize_groups(const FederationState& state) {
  ForkSummary s;
  s.group_count = static_cast<int>(state.groups.size());
  s.ever_forked = state.groups.next_id() > 1;
  int agreeing = 0;
  for (const auto& [id, g] : state.groups) {
    s.group_members.push_back(g.members);
    std::map<int, int> votes;
    for (int m : g.members) ++votes[state.devices[static_cast<std::size_t>(m)].shard.archetype_id];
    int majority = 0;
    for (const auto& [arch, n] : votes) majority = std::max(majority, n);
    agreeing += majority;
  }
  s.purity = 100.0 * agreeing / static_cast<double>(state.devices.size());
  return s;
}

std::string fmt(double v, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string build_report(const RunConfig& cfg, const ExperimentResult& r) {
  std::ostringstream os;
  os << "# configuration (defaults applied)\n" << cfg.to_text() << "\n";
  os << "# result\n";
  os << "algorithm: " << to_string(cfg.algorithm) << "\n";
  if (cfg.algorithm == Algorithm::kFedFmc)
    os << "groups after fork: " << r.fork.group_count
       << ", archetype purity " << fmt(r.fork.purity) << "%\n";
  os << "final balanced-test accuracy: " << fmt(r.final_test_acc) << "%\n";
  for (std::size_t a = 0; a < r.final_archetype_acc.size(); ++a)
    os << "  archetype " << a << ": " << fmt(r.final_archetype_acc[a]) << "%\n";
  os << "\n# cost accounting\n";
  os << "ledger totals: updates=" << r.ledger.updates() << " transfers=" << r.ledger.transfers() << "\n";
  os << "update count E*K*T: measured=" << r.measured_updates << " analytic=" << r.analytic_updates
     << (r.updates_match ? " [equal]" : " [MISMATCH]") << "\n";
  if (r.cost_check)
    os << "communication bound: " << r.cost_check->summary() << "\n";
  else
    os << "communication bound: not checked (non-default fork schedule)\n";
  return os.str();
}

}  // namespace

Environment build_environment(const RunConfig& cfg) {
  cfg.validate();
  const LabeledDataset source = load_source(cfg);
  for (const auto& a : cfg.archetypes)
    for (int c : a.label_set)
      if (c >= source.num_classes)
        throw ConfigError("archetypes: label " + std::to_string(c) + " not present in dataset", 0);

  Environment env;
  auto [test, pool] = split_balanced(source, archetype_labels(cfg), cfg.test_per_class,
                                     derive_seed(cfg.master_seed, SeedPurpose::kTestSplit));
  env.test = std::move(test);
  for (const auto& a : cfg.archetypes)
    env.archetype_test.push_back(env.test.subset(env.test.indices_with_labels(a.label_set)));

  auto shards = partition_archetypes(pool, cfg.archetypes, cfg.devices_per_archetype,
                                     cfg.samples_per_device, cfg.validation_fraction,
                                     derive_seed(cfg.master_seed, SeedPurpose::kPartition));
  std::vector<int> dims{static_cast<int>(source.feature_dim())};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(source.num_classes);
  env.initial_model = init_model(dims, derive_seed(cfg.master_seed, SeedPurpose::kInit));
  env.state = FederationState::create(std::move(shards), env.initial_model, cfg.master_seed);
  return env;
}

ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& options) {
  Environment env = build_environment(cfg);
  FederationState& state = env.state;
  ExperimentResult result;
  const TrainConfig train = cfg.train_config();
  const int N = state.num_devices();

  const RoundObserver record = [&](const RoundEvent& ev) {
    result.metrics.push_back(make_row(env, ev));
    if (options.observer) options.observer(ev);
  };

  if (cfg.algorithm == Algorithm::kFedAvg) {
    result.final_model = run_fedavg(state, cfg.T, cfg.K, train, record);
    result.measured_updates = state.ledger.updates(Phase::kFedAvg);
    result.cost_check = verify_against_bound(state.ledger, cfg.T, cfg.K, N, true);
  } else {
    if (options.resume_from) {
      restore_into(load_checkpoint(*options.resume_from), state);
    } else {
      run_fork_phase(state, cfg.T, cfg.K, train, cfg.fork, record);
      if (options.fork_checkpoint) {
        const ModelParams& lead = state.groups.at(state.groups.ids().front()).model;
        save_checkpoint(snapshot(state, lead), *options.fork_checkpoint);
      }
    }
    result.fork = summarize_groups(state);
    result.measured_updates = state.ledger.updates(Phase::kFork);
    if (cfg.fork.default_schedule())
      result.cost_check =
          verify_against_bound(state.ledger, cfg.T, cfg.K, N, !result.fork.ever_forked);
    if (options.fork_only)
      result.final_model = state.groups.at(state.groups.ids().front()).model;
    else
      result.final_model = run_merge_consolidate(state, train, cfg.merge, record);
  }

  result.analytic_updates = analytic_updates(cfg.E, cfg.K, cfg.T);
  result.updates_match = result.measured_updates == result.analytic_updates;
  result.ledger = state.ledger;
  result.final_test_acc = forward_eval(result.final_model, env.test).accuracy;
  for (const auto& subset : env.archetype_test)
    result.final_archetype_acc.push_back(forward_eval(result.final_model, subset).accuracy);
  result.report = build_report(cfg, result);
  return result;
}

}  // namespace fedfmc
