#include "fedfmc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "fedfmc/errors.hpp"

namespace fedfmc {

std::string to_string(Algorithm a) {
  return a == Algorithm::kFedAvg ? "fedavg" : "fedfmc";
}

std::string to_string(DatasetKind d) {
  switch (d) {
    case DatasetKind::kSynthetic:
      return "synthetic";
    case DatasetKind::kIdx:
      return "idx";
    case DatasetKind::kCsv:
      return "csv";
  }
  return "unknown";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

long long parse_int(const std::string& key, const std::string& v, std::size_t line) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected an integer, got '" + v + "'", line);
  return out;
}

int parse_int32(const std::string& key, const std::string& v, std::size_t line) {
  const long long x = parse_int(key, v, line);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw ConfigError(key + ": integer out of range", line);
  return static_cast<int>(x);
}

double parse_real(const std::string& key, const std::string& v, std::size_t line) {
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty() || std::isnan(out))
    throw ConfigError(key + ": expected a real number, got '" + v + "'", line);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'", line);
}

std::string fmt_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::string& sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? sep : "") << xs[i];
  return os.str();
}

}  // namespace

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.learning_rate = learning_rate;
  cfg.local_epochs = E;
  cfg.batch_size = batch_size;
  cfg.ewc_lambda = 0.0;
  return cfg;
}

void RunConfig::validate() const {
  const auto bad = [](const std::string& what) { throw ConfigError(what, 0); };
  if (archetypes.empty()) bad("archetypes: at least one archetype is required");
  for (const auto& a : archetypes) {
    if (a.label_set.empty()) bad("archetypes: empty label set");
    for (int c : a.label_set)
      if (c < 0) bad("archetypes: negative label");
    if (!(a.bias >= 0 && a.bias <= 1)) bad("bias: must lie in [0, 1]");
  }
  if (dataset != DatasetKind::kSynthetic && data_path.empty()) bad("data_path: required for file datasets");
  if (dataset == DatasetKind::kIdx && labels_path.empty()) bad("labels_path: required for idx datasets");
  if (dataset == DatasetKind::kSynthetic) {
    if (synthetic_classes < 2) bad("synthetic_classes: must be >= 2");
    if (synthetic_feature_dim < 1) bad("synthetic_feature_dim: must be >= 1");
    if (synthetic_per_class < 1) bad("synthetic_per_class: must be >= 1");
    if (!(synthetic_separation > 0)) bad("synthetic_separation: must be > 0");
    for (const auto& a : archetypes)
      for (int c : a.label_set)
        if (c >= synthetic_classes) bad("archetypes: label " + std::to_string(c) + " >= synthetic_classes");
  }
  if (test_per_class < 1) bad("test_per_class: must be >= 1");
  if (devices_per_archetype < 1) bad("devices_per_archetype: must be >= 1");
  if (samples_per_device < 2) bad("samples_per_device: must be >= 2");
  if (!(validation_fraction > 0 && validation_fraction < 1)) bad("validation_fraction: must lie in (0, 1)");
  if (T < 1) bad("T: must be >= 1");
  if (K < 1) bad("K: must be >= 1");
  if (K > num_devices())
    bad("K: " + std::to_string(K) + " exceeds N = " + std::to_string(num_devices()) +
        " (devices_per_archetype * archetypes)");
  if (E < 1) bad("E: must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) bad("hidden_dims: widths must be positive");
  if (!(learning_rate > 0)) bad("learning_rate: must be > 0");
  if (batch_size < 1) bad("batch_size: must be >= 1");
  if (!(fork.h_f > 0)) bad("h_f: must be > 0");
  if (!(fork.sigma_floor >= 0)) bad("sigma_floor: must be >= 0");
  if (fork.warmup_rounds < 1) bad("warmup_rounds: must be >= 1");
  if (fork.cooldown_from_end < 0) bad("cooldown_from_end: must be >= 0");
  if (fork.min_gap < 1) bad("min_gap: must be >= 1");
  if (merge.max_rounds_per_group < 1) bad("max_rounds_per_group: must be >= 1");
  if (merge.window < 1) bad("window: must be >= 1");
  if (!(merge.accuracy_gap >= 0)) bad("accuracy_gap: must be >= 0");
  if (!(merge.participation_fraction > 0 && merge.participation_fraction <= 1))
    bad("participation_fraction: must lie in (0, 1]");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  std::vector<std::string> sets, biases;
  for (const auto& a : archetypes) {
    sets.push_back(join(a.label_set, ","));
    biases.push_back(fmt_real(a.bias));
  }
  os << "algorithm = " << to_string(algorithm) << "\n"
     << "dataset = " << to_string(dataset) << "\n";
  if (!data_path.empty()) os << "data_path = " << data_path << "\n";
  if (!labels_path.empty()) os << "labels_path = " << labels_path << "\n";
  os << "synthetic_classes = " << synthetic_classes << "\n"
     << "synthetic_feature_dim = " << synthetic_feature_dim << "\n"
     << "synthetic_per_class = " << synthetic_per_class << "\n"
     << "synthetic_separation = " << fmt_real(synthetic_separation) << "\n"
     << "test_per_class = " << test_per_class << "\n"
     << "archetypes = " << join(sets, "; ") << "\n"
     << "archetype_biases = " << join(biases, "; ") << "\n"
     << "devices_per_archetype = " << devices_per_archetype << "\n"
     << "samples_per_device = " << samples_per_device << "\n"
     << "validation_fraction = " << fmt_real(validation_fraction) << "\n"
     << "T = " << T << "\n"
     << "K = " << K << "\n"
     << "E = " << E << "\n"
     << "hidden_dims = " << join(hidden_dims, ",") << "\n"
     << "learning_rate = " << fmt_real(learning_rate) << "\n"
     << "batch_size = " << batch_size << "\n"
     << "h_f = " << fmt_real(fork.h_f) << "\n"
     << "sigma_floor = " << fmt_real(fork.sigma_floor) << "\n"
     << "warmup_rounds = " << fork.warmup_rounds << "\n"
     << "cooldown_from_end = " << fork.cooldown_from_end << "\n"
     << "min_gap = " << fork.min_gap << "\n"
     << "max_rounds_per_group = " << merge.max_rounds_per_group << "\n"
     << "window = " << merge.window << "\n"
     << "accuracy_gap = " << fmt_real(merge.accuracy_gap) << "\n"
     << "participation_fraction = " << fmt_real(merge.participation_fraction) << "\n"
     << "ewc_enabled = " << (merge.ewc_enabled ? "true" : "false") << "\n"
     << "master_seed = " << master_seed << "\n";
  return os.str();
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, std::size_t> seen;  // key -> line
  std::optional<double> shared_bias;
  std::optional<std::vector<double>> per_archetype_bias;
  std::size_t archetypes_line = 0;

  using Setter = std::function<void(const std::string&, std::size_t)>;
  const std::map<std::string, Setter> setters = {
      {"algorithm",
       [&](const std::string& v, std::size_t l) {
         if (v == "fedavg") cfg.algorithm = Algorithm::kFedAvg;
         else if (v == "fedfmc") cfg.algorithm = Algorithm::kFedFmc;
         else throw ConfigError("algorithm: expected fedavg or fedfmc, got '" + v + "'", l);
       }},
      {"dataset",
       [&](const std::string& v, std::size_t l) {
         if (v == "synthetic") cfg.dataset = DatasetKind::kSynthetic;
         else if (v == "idx") cfg.dataset = DatasetKind::kIdx;
         else if (v == "csv") cfg.dataset = DatasetKind::kCsv;
         else throw ConfigError("dataset: expected synthetic, idx or csv, got '" + v + "'", l);
       }},
      {"data_path", [&](const std::string& v, std::size_t) { cfg.data_path = v; }},
      {"labels_path", [&](const std::string& v, std::size_t) { cfg.labels_path = v; }},
      {"synthetic_classes", [&](const std::string& v, std::size_t l) { cfg.synthetic_classes = parse_int32("synthetic_classes", v, l); }},
      {"synthetic_feature_dim", [&](const std::string& v, std::size_t l) { cfg.synthetic_feature_dim = parse_int32("synthetic_feature_dim", v, l); }},
      {"synthetic_per_class", [&](const std::string& v, std::size_t l) { cfg.synthetic_per_class = parse_int32("synthetic_per_class", v, l); }},
      {"synthetic_separation", [&](const std::string& v, std::size_t l) { cfg.synthetic_separation = parse_real("synthetic_separation", v, l); }},
      {"test_per_class", [&](const std::string& v, std::size_t l) { cfg.test_per_class = parse_int32("test_per_class", v, l); }},
      {"archetypes",
       [&](const std::string& v, std::size_t l) {
         archetypes_line = l;
         for (const auto& set : split(v, ';')) {
           ArchetypeSpec spec;
           for (const auto& label : split(set, ','))
             spec.label_set.push_back(parse_int32("archetypes", label, l));
           if (spec.label_set.empty()) throw ConfigError("archetypes: empty label set", l);
           cfg.archetypes.push_back(std::move(spec));
         }
       }},
      {"bias", [&](const std::string& v, std::size_t l) { shared_bias = parse_real("bias", v, l); }},
      {"archetype_biases",
       [&](const std::string& v, std::size_t l) {
         std::vector<double> b;
         for (const auto& x : split(v, ';')) b.push_back(parse_real("archetype_biases", x, l));
         per_archetype_bias = std::move(b);
       }},
      {"devices_per_archetype", [&](const std::string& v, std::size_t l) { cfg.devices_per_archetype = parse_int32("devices_per_archetype", v, l); }},
      {"samples_per_device", [&](const std::string& v, std::size_t l) { cfg.samples_per_device = parse_int32("samples_per_device", v, l); }},
      {"validation_fraction", [&](const std::string& v, std::size_t l) { cfg.validation_fraction = parse_real("validation_fraction", v, l); }},
      {"T", [&](const std::string& v, std::size_t l) { cfg.T = parse_int32("T", v, l); }},
      {"K", [&](const std::string& v, std::size_t l) { cfg.K = parse_int32("K", v, l); }},
      {"E", [&](const std::string& v, std::size_t l) { cfg.E = parse_int32("E", v, l); }},
      {"hidden_dims",
       [&](const std::string& v, std::size_t l) {
         cfg.hidden_dims.clear();
         if (v.empty() || v == "none") return;
         for (const auto& x : split(v, ',')) cfg.hidden_dims.push_back(parse_int32("hidden_dims", x, l));
       }},
      {"learning_rate", [&](const std::string& v, std::size_t l) { cfg.learning_rate = parse_real("learning_rate", v, l); }},
      {"batch_size", [&](const std::string& v, std::size_t l) { cfg.batch_size = parse_int32("batch_size", v, l); }},
      {"h_f", [&](const std::string& v, std::size_t l) { cfg.fork.h_f = parse_real("h_f", v, l); }},
      {"sigma_floor", [&](const std::string& v, std::size_t l) { cfg.fork.sigma_floor = parse_real("sigma_floor", v, l); }},
      {"warmup_rounds", [&](const std::string& v, std::size_t l) { cfg.fork.warmup_rounds = parse_int32("warmup_rounds", v, l); }},
      {"cooldown_from_end", [&](const std::string& v, std::size_t l) { cfg.fork.cooldown_from_end = parse_int32("cooldown_from_end", v, l); }},
      {"min_gap", [&](const std::string& v, std::size_t l) { cfg.fork.min_gap = parse_int32("min_gap", v, l); }},
      {"max_rounds_per_group", [&](const std::string& v, std::size_t l) { cfg.merge.max_rounds_per_group = parse_int32("max_rounds_per_group", v, l); }},
      {"window", [&](const std::string& v, std::size_t l) { cfg.merge.window = parse_int32("window", v, l); }},
      {"accuracy_gap", [&](const std::string& v, std::size_t l) { cfg.merge.accuracy_gap = parse_real("accuracy_gap", v, l); }},
      {"participation_fraction", [&](const std::string& v, std::size_t l) { cfg.merge.participation_fraction = parse_real("participation_fraction", v, l); }},
      {"ewc_enabled", [&](const std::string& v, std::size_t l) { cfg.merge.ewc_enabled = parse_bool("ewc_enabled", v, l); }},
      {"master_seed",
       [&](const std::string& v, std::size_t l) {
         const long long s = parse_int("master_seed", v, l);
         if (s < 0) throw ConfigError("master_seed: must be >= 0", l);
         cfg.master_seed = static_cast<Seed>(s);
       }},
  };

  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key '" + key + "'", lineno);
    if (const auto prev = seen.find(key); prev != seen.end())
      throw ConfigError("duplicate key '" + key + "' (first set on line " +
                            std::to_string(prev->second) + ")",
                        lineno);
    seen.emplace(key, lineno);
    it->second(value, lineno);
  }

  for (const char* required : {"algorithm", "dataset", "archetypes", "T", "K"})
    if (!seen.contains(required))
      throw ConfigError(std::string("missing required key '") + required + "'", 0);

  if (shared_bias && per_archetype_bias)
    throw ConfigError("bias and archetype_biases are mutually exclusive", seen.at("archetype_biases"));
  if (per_archetype_bias) {
    if (per_archetype_bias->size() != cfg.archetypes.size())
      throw ConfigError("archetype_biases: expected " + std::to_string(cfg.archetypes.size()) +
                            " values",
                        seen.at("archetype_biases"));
    for (std::size_t i = 0; i < cfg.archetypes.size(); ++i)
      cfg.archetypes[i].bias = (*per_archetype_bias)[i];
  } else {
    for (auto& a : cfg.archetypes) a.bias = shared_bias.value_or(1.0);
  }

  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Point at the line that set the offending key when we know it.
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    const std::string key = msg.substr(0, colon);
    const auto it = seen.find(key);
    throw ConfigError(msg, it != seen.end() ? it->second
                                            : (key == "archetypes" ? archetypes_line : 0));
  }
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace fedfmc
