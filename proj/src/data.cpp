#include "fedfmc/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fedfmc/errors.hpp"

namespace fedfmc {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t at,
                        const std::filesystem::path& path) {
  if (at + 4 > buf.size()) throw DataError("truncated IDX header in " + path.string());
  return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) |
         (std::uint32_t{buf[at + 2]} << 8) | std::uint32_t{buf[at + 3]};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos
                                              ? std::string_view::npos
                                              : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Takes `k` distinct elements of `pool` uniformly at random (partial shuffle).
std::vector<int> draw_without_replacement(std::vector<int> pool, std::size_t k,
                                          Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

void LabeledDataset::validate() const {
  if (features.rows() != labels.size())
    throw DataError("feature rows and label count differ");
  if (num_classes < 1) throw DataError("num_classes must be positive");
  if (labels.size() > 0 &&
      (labels.minCoeff() < 0 || labels.maxCoeff() >= num_classes))
    throw DataError("label outside [0, num_classes)");
}

LabeledDataset LabeledDataset::subset(const std::vector<int>& indices) const {
  LabeledDataset out;
  out.features = features(indices, Eigen::all);
  out.labels = labels(indices);
  out.num_classes = num_classes;
  return out;
}

std::vector<int> LabeledDataset::indices_with_labels(
    const std::vector<int>& classes) const {
  std::vector<char> wanted(static_cast<std::size_t>(std::max(num_classes, 1)), 0);
  for (int c : classes)
    if (c >= 0 && c < num_classes) wanted[static_cast<std::size_t>(c)] = 1;
  std::vector<int> out;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (wanted[static_cast<std::size_t>(labels(i))]) out.push_back(static_cast<int>(i));
  return out;
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  const std::size_t columns = split_commas(line).size();
  if (columns < 2) throw DataError(path.string() + ": need at least one feature and a label");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != columns)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(columns) + " columns, got " +
                      std::to_string(cells.size()));
    for (std::size_t c = 0; c + 1 < columns; ++c) {
      double v = 0;
      const auto [p, ec] = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), v);
      if (ec != std::errc() || p != cells[c].data() + cells[c].size() || !std::isfinite(v))
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad feature '" +
                        std::string(cells[c]) + "'");
      values.push_back(v);
    }
    int label = 0;
    const auto& cell = cells.back();
    const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || p != cell.data() + cell.size() || label < 0)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad label '" +
                      std::string(cell) + "'");
    labels.push_back(label);
  }
  if (labels.empty()) throw DataError(path.string() + ": no data rows");

  const auto rows = static_cast<Eigen::Index>(labels.size());
  const auto cols = static_cast<Eigen::Index>(columns - 1);
  LabeledDataset ds;
  ds.features = Eigen::Map<const RowMatrix>(values.data(), rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double lo = ds.features.col(c).minCoeff();
    const double hi = ds.features.col(c).maxCoeff();
    if (hi > lo)
      ds.features.col(c) = (ds.features.col(c).array() - lo) / (hi - lo);
    else
      ds.features.col(c).setZero();
  }
  ds.labels = Eigen::Map<const IndexVector>(labels.data(), rows);
  ds.num_classes = ds.labels.maxCoeff() + 1;
  ds.validate();
  return ds;
}

LabeledDataset load_idx(const std::filesystem::path& images,
                        const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (read_be32(img, 0, images) != kIdxImageMagic)
    throw DataError(images.string() + ": bad IDX image magic");
  if (read_be32(lab, 0, labels) != kIdxLabelMagic)
    throw DataError(labels.string() + ": bad IDX label magic");
  const std::uint32_t count = read_be32(img, 4, images);
  const std::uint32_t rows = read_be32(img, 8, images);
  const std::uint32_t cols = read_be32(img, 12, images);
  const std::uint32_t label_count = read_be32(lab, 4, labels);
  if (count != label_count)
    throw DataError("IDX image count " + std::to_string(count) +
                    " differs from label count " + std::to_string(label_count));
  const std::size_t dim = std::size_t{rows} * cols;
  if (img.size() != 16 + std::size_t{count} * dim)
    throw DataError(images.string() + ": payload size does not match header");
  if (lab.size() != 8 + std::size_t{count})
    throw DataError(labels.string() + ": payload size does not match header");
  if (count == 0 || dim == 0) throw DataError(images.string() + ": empty IDX file");

  LabeledDataset ds;
  ds.features.resize(count, static_cast<Eigen::Index>(dim));
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j)
      ds.features(i, static_cast<Eigen::Index>(j)) = img[16 + i * dim + j] / 255.0;
    ds.labels(i) = lab[8 + i];
  }
  ds.num_classes = ds.labels.maxCoeff() + 1;
  ds.validate();
  return ds;
}

LabeledDataset load_dataset(const std::filesystem::path& path,
                            DatasetFormat format,
                            const std::filesystem::path& labels_path) {
  switch (format) {
    case DatasetFormat::kCsv:
      return load_csv(path);
    case DatasetFormat::kIdx:
      return load_idx(path, labels_path);
  }
  throw DataError("unknown dataset format");
}

LabeledDataset gen_synthetic(int num_classes, int feature_dim, int per_class,
                             double separation, Seed seed) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
  if (!(separation > 0)) throw std::invalid_argument("separation must be > 0");

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Random directions, rescaled so the closest pair sits exactly `separation`
  // apart (with a hair of slack against rounding).
  Matrix means(num_classes, feature_dim);
  double closest = 0.0;
  while (closest <= 0.0) {
    for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = normal(rng);
    closest = std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_classes; ++a)
      for (int b = a + 1; b < num_classes; ++b)
        closest = std::min(closest, (means.row(a) - means.row(b)).norm());
  }
  means *= separation * (1.0 + 1e-12) / closest;

  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.features.resize(Eigen::Index{num_classes} * per_class, feature_dim);
  ds.labels.resize(Eigen::Index{num_classes} * per_class);
  Eigen::Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (int j = 0; j < feature_dim; ++j) ds.features(row, j) = means(c, j) + normal(rng);
      ds.labels(row) = c;
    }
  }
  return ds;
}

std::vector<DeviceShard> partition_archetypes(
    const LabeledDataset& dataset, const std::vector<ArchetypeSpec>& specs,
    int devices_per_archetype, int samples_per_device,
    double validation_fraction, Seed seed) {
  if (specs.empty()) throw std::invalid_argument("archetype spec list is empty");
  if (devices_per_archetype < 1) throw std::invalid_argument("devices_per_archetype must be >= 1");
  if (samples_per_device < 2) throw std::invalid_argument("samples_per_device must be >= 2");
  if (!(validation_fraction > 0 && validation_fraction < 1))
    throw std::invalid_argument("validation_fraction must lie in (0, 1)");
  dataset.validate();

  std::vector<char> present(static_cast<std::size_t>(dataset.num_classes), 0);
  for (Eigen::Index i = 0; i < dataset.size(); ++i)
    present[static_cast<std::size_t>(dataset.labels(i))] = 1;

  std::vector<std::vector<int>> pools;
  for (const auto& spec : specs) {
    if (spec.label_set.empty()) throw std::invalid_argument("archetype label_set is empty");
    if (!(spec.bias >= 0 && spec.bias <= 1))
      throw std::invalid_argument("archetype bias must lie in [0, 1]");
    for (int c : spec.label_set)
      if (c < 0 || c >= dataset.num_classes || !present[static_cast<std::size_t>(c)])
        throw DataError("dataset has no examples of archetype label " + std::to_string(c));
    pools.push_back(dataset.indices_with_labels(spec.label_set));
  }

  const auto total = static_cast<std::size_t>(dataset.size());
  const auto per_device = static_cast<std::size_t>(samples_per_device);
  auto val_count = static_cast<std::size_t>(std::floor(validation_fraction * samples_per_device));
  val_count = std::clamp<std::size_t>(val_count, 1, per_device - 1);

  std::vector<DeviceShard> shards;
  for (std::size_t a = 0; a < specs.size(); ++a) {
    const auto skewed = static_cast<std::size_t>(std::floor(specs[a].bias * samples_per_device));
    if (skewed > pools[a].size() || per_device > total)
      throw DataError("not enough source examples for archetype " + std::to_string(a));
    for (int d = 0; d < devices_per_archetype; ++d) {
      const auto device = static_cast<std::uint64_t>(a * devices_per_archetype + d);
      Rng rng(derive_seed(seed, SeedPurpose::kPartition, {device}));

      std::vector<int> picked = draw_without_replacement(pools[a], skewed, rng);
      std::vector<char> used(total, 0);
      for (int i : picked) used[static_cast<std::size_t>(i)] = 1;
      std::vector<int> rest;
      rest.reserve(total - skewed);
      for (std::size_t i = 0; i < total; ++i)
        if (!used[i]) rest.push_back(static_cast<int>(i));
      const auto extra = draw_without_replacement(std::move(rest), per_device - skewed, rng);
      picked.insert(picked.end(), extra.begin(), extra.end());
      std::shuffle(picked.begin(), picked.end(), rng);

      DeviceShard shard;
      shard.archetype_id = static_cast<int>(a);
      shard.validation_source.assign(picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(val_count));
      shard.train_source.assign(picked.begin() + static_cast<std::ptrdiff_t>(val_count), picked.end());
      shard.train = dataset.subset(shard.train_source);
      shard.validation = dataset.subset(shard.validation_source);
      shard.n_k = static_cast<int>(shard.train.size());
      shards.push_back(std::move(shard));
    }
  }
  return shards;
}

std::pair<LabeledDataset, LabeledDataset> split_balanced(
    const LabeledDataset& dataset, const std::vector<int>& classes,
    int per_class, Seed seed) {
  if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
  dataset.validate();
  Rng rng(seed);
  std::vector<char> held(static_cast<std::size_t>(dataset.size()), 0);
  std::vector<int> held_idx;
  for (int c : classes) {
    if (c < 0 || c >= dataset.num_classes)
      throw DataError("test split class " + std::to_string(c) + " out of range");
    auto pool = dataset.indices_with_labels({c});
    if (pool.size() < static_cast<std::size_t>(per_class))
      throw DataError("class " + std::to_string(c) + " has fewer than " +
                      std::to_string(per_class) + " examples for the test split");
    for (int i : draw_without_replacement(std::move(pool), static_cast<std::size_t>(per_class), rng)) {
      held[static_cast<std::size_t>(i)] = 1;
      held_idx.push_back(i);
    }
  }
  std::vector<int> rest;
  for (Eigen::Index i = 0; i < dataset.size(); ++i)
    if (!held[static_cast<std::size_t>(i)]) rest.push_back(static_cast<int>(i));
  return {dataset.subset(held_idx), dataset.subset(rest)};
}

}  // namespace fedfmc
