#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedfmc/eigen_types.hpp"
#include "fedfmc/seed.hpp"

namespace fedfmc {

/// Features (one example per row) with integer class labels.
struct LabeledDataset {
  RowMatrix features;
  IndexVector labels;
  int num_classes = 0;

  Eigen::Index size() const noexcept { return labels.size(); }
  Eigen::Index feature_dim() const noexcept { return features.cols(); }
  bool empty() const noexcept { return labels.size() == 0; }

  /// Throws DataError when rows/labels disagree or a label is out of range.
  void validate() const;

  /// Rows at `indices`, in that order.
  LabeledDataset subset(const std::vector<int>& indices) const;

  /// Indices of examples whose label is in `classes`.
  std::vector<int> indices_with_labels(const std::vector<int>& classes) const;
};

/// Label-skew archetype: a device over-represents `label_set` by `bias`.
struct ArchetypeSpec {
  std::vector<int> label_set;
  double bias = 1.0;
};

struct DeviceShard {
  LabeledDataset train;
  LabeledDataset validation;
  int archetype_id = 0;  // ground truth, evaluation only
  int n_k = 0;           // train.size()

  // Source-dataset row indices backing each split.
  std::vector<int> train_source;
  std::vector<int> validation_source;
};

enum class DatasetFormat { kIdx, kCsv };

/// CSV with a header row; every column but the last is a feature, the last an
/// integer label. Features are min-max scaled per column into [0, 1].
LabeledDataset load_csv(const std::filesystem::path& path);

/// IDX image file (magic 0x00000803, ubyte) plus IDX label file (0x00000801).
/// Pixels are divided by 255.
LabeledDataset load_idx(const std::filesystem::path& images,
                        const std::filesystem::path& labels);

/// `path` is the CSV file, or for IDX the image file with the label file in
/// `labels_path`.
LabeledDataset load_dataset(const std::filesystem::path& path,
                            DatasetFormat format,
                            const std::filesystem::path& labels_path = {});

/// Isotropic unit-variance Gaussian blobs, `per_class` draws per class, class
/// means at pairwise distance >= `separation`. Rows are grouped by class.
LabeledDataset gen_synthetic(int num_classes, int feature_dim, int per_class,
                             double separation, Seed seed);

/// Assigns `devices_per_archetype` shards to every spec, in spec order. Device
/// d of archetype a gets global index a * devices_per_archetype + d.
std::vector<DeviceShard> partition_archetypes(
    const LabeledDataset& dataset, const std::vector<ArchetypeSpec>& specs,
    int devices_per_archetype, int samples_per_device,
    double validation_fraction, Seed seed);

/// Splits off `per_class` examples of each listed class as a balanced
/// held-out set. Returns {held_out, remainder}.
std::pair<LabeledDataset, LabeledDataset> split_balanced(
    const LabeledDataset& dataset, const std::vector<int>& classes,
    int per_class, Seed seed);

}  // namespace fedfmc
