#include "fedfmc/presets.hpp"

#include "fedfmc/errors.hpp"

namespace fedfmc {

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"three-archetypes",
       "12 devices over single-label archetypes {0}, {1}, {2} (synthetic blobs)",
       R"(algorithm = fedfmc
dataset = synthetic
synthetic_classes = 3
synthetic_separation = 2.0
archetypes = 0; 1; 2
bias = 1.0
devices_per_archetype = 4
samples_per_device = 100
T = 25
K = 6
E = 5
learning_rate = 0.1
)"},
      {"grouped-archetypes",
       "12 devices over archetypes {0,1,2,3}, {4,5,6}, {7,8,9} (synthetic blobs)",
       R"(algorithm = fedfmc
dataset = synthetic
synthetic_classes = 10
synthetic_separation = 3.0
archetypes = 0,1,2,3; 4,5,6; 7,8,9
bias = 1.0
devices_per_archetype = 4
samples_per_device = 100
T = 25
K = 6
E = 5
learning_rate = 0.1
)"},
  };
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + name + "'", 0);
}

RunConfig preset_config(const std::string& name) {
  return parse_config_text(find_preset(name).config_text);
}

}  // namespace fedfmc
