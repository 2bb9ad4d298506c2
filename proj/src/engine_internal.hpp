#pragma once

#include <vector>

#include "fedfmc/federation.hpp"

namespace fedfmc::internal {

/// Trains each listed device from its current model on its train split.
std::vector<ModelParams> train_devices(const FederationState& state,
                                       const std::vector<int>& device_ids,
                                       const TrainConfig& cfg, SeedPurpose purpose);

/// Validation loss/accuracy of every listed device's current model, appended
/// to its history under the current round.
void evaluate_devices(FederationState& state, const std::vector<int>& device_ids);

std::vector<int> all_device_ids(const FederationState& state);

}  // namespace fedfmc::internal
