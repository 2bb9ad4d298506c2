#pragma once

#include <random>
#include <vector>

#include "fedfmc/data.hpp"
#include "fedfmc/learner.hpp"

namespace testing {

inline fedfmc::LabeledDataset random_dataset(int n, int dim, int classes, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  fedfmc::LabeledDataset d;
  d.features.resize(n, dim);
  d.labels.resize(n);
  d.num_classes = classes;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) d.features(i, j) = nd(rng);
    d.labels(i) = static_cast<int>(rng() % static_cast<unsigned>(classes));
  }
  return d;
}

inline fedfmc::ModelParams random_model(const std::vector<int>& dims, unsigned seed,
                                        double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  fedfmc::Vector v(fedfmc::parameter_count(dims));
  for (auto& x : v) x = nd(rng);
  return {dims, v};
}

}  // namespace testing
