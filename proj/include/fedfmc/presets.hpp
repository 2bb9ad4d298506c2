#pragma once

#include <string>
#include <vector>

#include "fedfmc/config.hpp"

namespace fedfmc {

struct Preset {
  std::string name;
  std::string description;
  std::string config_text;
};

/// Bundled experiment presets:
///   three-archetypes    single-label archetypes {0}, {1}, {2}, bias 1.0
///   grouped-archetypes  {0,1,2,3}, {4,5,6}, {7,8,9}, bias 1.0
const std::vector<Preset>& presets();

/// Throws ConfigError for unknown names.
const Preset& find_preset(const std::string& name);
RunConfig preset_config(const std::string& name);

}  // namespace fedfmc
