#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "fedfmc/config.hpp"
#include "fedfmc/errors.hpp"
#include "fedfmc/presets.hpp"

using namespace fedfmc;

namespace {

const std::string kMinimal =
    "algorithm = fedfmc\n"
    "dataset = synthetic\n"
    "archetypes = 0; 1; 2\n"
    "T = 25\n"
    "K = 6\n";

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  const auto c = parse_config_text(kMinimal);
  CHECK(c.algorithm == Algorithm::kFedFmc);
  CHECK(c.archetypes.size() == 3);
  CHECK(c.archetypes[1].label_set == std::vector<int>{1});
  CHECK(c.archetypes[0].bias == 1.0);
  CHECK(c.fork.warmup_rounds == 5);
  CHECK(c.fork.cooldown_from_end == 5);
  CHECK(c.fork.min_gap == 4);
  CHECK(c.merge.window == 5);
  CHECK(c.merge.accuracy_gap == 1.0);
  CHECK(c.merge.participation_fraction == 0.5);
  CHECK(c.merge.ewc_enabled);
  CHECK(c.fork.default_schedule());
}

TEST_CASE("to_text round-trips every field") {
  auto c = parse_config_text(kMinimal + "h_f = inf\nhidden_dims = 7,5\nmaster_seed = 99\n"
                                        "archetype_biases = 0.5; 0.25; 1\nlearning_rate = 0.0123\n");
  CHECK(std::isinf(c.fork.h_f));
  const auto again = parse_config_text(c.to_text());
  CHECK(again.to_text() == c.to_text());
  CHECK(again.hidden_dims == std::vector<int>{7, 5});
  CHECK(again.archetypes[1].bias == 0.25);
  CHECK(again.learning_rate == 0.0123);
  CHECK(again.master_seed == 99);
}

TEST_CASE("grouped archetypes and comments") {
  const auto c = parse_config_text(
      "# grouped\nalgorithm = fedavg   # baseline\ndataset = synthetic\nsynthetic_classes = 10\n"
      "archetypes = 0,1,2,3; 4,5,6; 7,8,9\nbias = 0.8\nT = 5\nK = 3\n");
  CHECK(c.algorithm == Algorithm::kFedAvg);
  REQUIRE(c.archetypes.size() == 3);
  CHECK(c.archetypes[0].label_set == std::vector<int>{0, 1, 2, 3});
  CHECK(c.archetypes[2].bias == 0.8);
}

TEST_CASE("strict parsing errors carry line numbers") {
  CHECK(error_of(kMinimal + "K = 7\n").find("line 6") != std::string::npos);
  CHECK(error_of(kMinimal + "K = 7\n").find("duplicate") != std::string::npos);
  CHECK(error_of(kMinimal + "colour = blue\n").find("unknown key 'colour'") != std::string::npos);
  CHECK(error_of(kMinimal + "just words\n").find("line 6") != std::string::npos);
  CHECK(error_of("algorithm = fedfmc\ndataset = synthetic\nT = 3\nK = 1\n").find("archetypes") !=
        std::string::npos);
  CHECK(error_of(kMinimal + "E = two\n").find("E: expected an integer") != std::string::npos);
  CHECK(error_of(kMinimal + "bias = 1\narchetype_biases = 1;1;1\n").find("mutually exclusive") !=
        std::string::npos);
  CHECK_FALSE(error_of(kMinimal + "algorithm2 = x\n").empty());
}

TEST_CASE("constraint violations name the field") {
  const std::string k_too_big = error_of(
      "algorithm = fedfmc\ndataset = synthetic\narchetypes = 0; 1\ndevices_per_archetype = 2\n"
      "T = 25\nK = 5\n");
  CHECK(k_too_big.find("K:") != std::string::npos);
  CHECK(k_too_big.find("line 6") != std::string::npos);
  CHECK(error_of(kMinimal + "h_f = 0\n").find("h_f") != std::string::npos);
  CHECK(error_of(kMinimal + "bias = 1.5\n").find("bias") != std::string::npos);
  CHECK(error_of(kMinimal + "synthetic_classes = 2\n").find("archetypes") != std::string::npos);
  CHECK(error_of(kMinimal + "participation_fraction = 0\n").find("participation_fraction") !=
        std::string::npos);
  CHECK(error_of(kMinimal + "window = 0\n").find("window") != std::string::npos);
  CHECK(error_of("algorithm = fedfmc\ndataset = csv\narchetypes = 0\nT = 1\nK = 1\n")
            .find("data_path") != std::string::npos);
}

TEST_CASE("parse_config reads files") {
  const auto p = std::filesystem::temp_directory_path() / "fedfmc_test_config.txt";
  std::ofstream(p) << kMinimal;
  CHECK(parse_config(p).T == 25);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(parse_config(p), ConfigError);
}

TEST_CASE("bundled presets") {
  REQUIRE(presets().size() == 2);
  const auto three = preset_config("three-archetypes");
  REQUIRE(three.archetypes.size() == 3);
  for (int a = 0; a < 3; ++a) {
    CHECK(three.archetypes[static_cast<std::size_t>(a)].label_set == std::vector<int>{a});
    CHECK(three.archetypes[static_cast<std::size_t>(a)].bias == 1.0);
  }
  CHECK(three.num_devices() == 12);
  CHECK(three.devices_per_archetype == 4);
  CHECK(three.T == 25);
  CHECK(three.K == 6);
  CHECK(three.fork.default_schedule());

  const auto grouped = preset_config("grouped-archetypes");
  REQUIRE(grouped.archetypes.size() == 3);
  CHECK(grouped.archetypes[0].label_set == std::vector<int>{0, 1, 2, 3});
  CHECK(grouped.archetypes[1].label_set == std::vector<int>{4, 5, 6});
  CHECK(grouped.archetypes[2].label_set == std::vector<int>{7, 8, 9});
  for (const auto& a : grouped.archetypes) CHECK(a.bias == 1.0);

  CHECK_THROWS_AS(find_preset("nope"), ConfigError);
}
