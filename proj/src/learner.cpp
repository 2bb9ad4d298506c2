#include "fedfmc/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedfmc/errors.hpp"
#include "fedfmc/mlp_kernels.hpp"

namespace fedfmc {

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2)
    throw DimensionError("layer_dims needs at least input and output");
  for (int d : dims)
    if (d < 1) throw DimensionError("layer widths must be positive");
}

void check_compatible(const ModelParams& model, const LabeledDataset& data) {
  if (data.empty()) throw DimensionError("dataset is empty");
  if (data.feature_dim() != model.input_dim())
    throw DimensionError("feature width " + std::to_string(data.feature_dim()) +
                         " does not match model input " +
                         std::to_string(model.input_dim()));
  if (data.labels.maxCoeff() >= model.num_classes() || data.labels.minCoeff() < 0)
    throw DimensionError("label outside model output range");
}

void check_ewc_inputs(const ModelParams& model, const ModelParams& anchor,
                      const FisherDiag& fisher) {
  if (!model.same_layout(anchor) || model.size() != anchor.size())
    throw DimensionError("EWC anchor layout differs from model");
  if (fisher.values.size() != model.size())
    throw DimensionError("Fisher diagonal length differs from model");
}

int argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int c = 1; c < row.size(); ++c)
    if (row(c) > row(best)) best = c;
  return best;
}

struct EwcTerm {
  const ModelParams* anchor;
  const FisherDiag* fisher;
  double lambda;
};

ModelParams run_sgd(const ModelParams& model, const LabeledDataset& data,
                    const TrainConfig& cfg, Seed seed, const EwcTerm* ewc) {
  cfg.validate();
  check_compatible(model, data);

  ModelParams out = model;
  Vector grad(out.size());
  const Eigen::Index n = data.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);

  for (int epoch = 1; epoch <= cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
      const auto idx = std::span(order).subspan(static_cast<std::size_t>(start),
                                                static_cast<std::size_t>(len));
      const RowMatrix xb = data.features(idx, Eigen::all);
      const IndexVector yb = data.labels(idx);
      const double loss = kernels::loss_and_gradient<double>(
          out.layer_dims, out.values.data(), xb, yb, grad.data());
      if (!std::isfinite(loss))
        throw TrainingDivergence(
            "non-finite training loss in epoch " + std::to_string(epoch), epoch);
      if (ewc)
        grad.array() += 2.0 * ewc->lambda * ewc->fisher->values.array() *
                        (out.values - ewc->anchor->values).array();
      out.values -= cfg.learning_rate * grad;
    }
    if (!out.all_finite())
      throw TrainingDivergence(
          "non-finite parameters after epoch " + std::to_string(epoch), epoch);
  }
  return out;
}

}  // namespace

Eigen::Index parameter_count(const std::vector<int>& layer_dims) {
  check_dims(layer_dims);
  return kernels::layer_offsets(layer_dims).back();
}

ModelParams::ModelParams(std::vector<int> dims, Vector v)
    : layer_dims(std::move(dims)), values(std::move(v)) {
  if (values.size() != parameter_count(layer_dims))
    throw DimensionError("parameter vector length " +
                         std::to_string(values.size()) +
                         " does not match layer_dims");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(ewc_lambda >= 0)) throw std::invalid_argument("ewc_lambda must be >= 0");
}

ModelParams init_model(const std::vector<int>& layer_dims, Seed seed) {
  Vector values = Vector::Zero(parameter_count(layer_dims));
  Rng rng(seed);
  const auto offsets = kernels::layer_offsets(layer_dims);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / layer_dims[l]));
    const Eigen::Index count = Eigen::Index{layer_dims[l]} * layer_dims[l + 1];
    for (Eigen::Index i = 0; i < count; ++i) values(offsets[l] + i) = dist(rng);
  }
  return ModelParams(layer_dims, std::move(values));
}

RowMatrix predict_proba(const ModelParams& model, const RowMatrix& features) {
  if (features.cols() != model.input_dim())
    throw DimensionError("feature width does not match model input");
  const RowMatrix logits =
      kernels::forward<double>(model.layer_dims, model.values.data(), features);
  return kernels::log_softmax_rows(logits).array().exp();
}

EvalResult forward_eval(const ModelParams& model, const LabeledDataset& data) {
  check_compatible(model, data);
  const RowMatrix logits =
      kernels::forward<double>(model.layer_dims, model.values.data(), data.features);
  const RowMatrix logp = kernels::log_softmax_rows(logits);
  double loss = 0.0;
  Eigen::Index correct = 0;
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    loss -= logp(r, data.labels(r));
    if (argmax_lowest(logits.row(r)) == data.labels(r)) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {std::max(0.0, loss / n), 100.0 * static_cast<double>(correct) / n};
}

double loss_and_gradient(const ModelParams& model, const LabeledDataset& data,
                         Vector& gradient) {
  check_compatible(model, data);
  gradient.resize(model.size());
  return kernels::loss_and_gradient<double>(model.layer_dims, model.values.data(),
                                            data.features, data.labels,
                                            gradient.data());
}

ModelParams sgd_epochs(const ModelParams& model, const LabeledDataset& data,
                       const TrainConfig& cfg, Seed seed) {
  return run_sgd(model, data, cfg, seed, nullptr);
}

double ewc_penalty(const ModelParams& model, const ModelParams& anchor,
                   const FisherDiag& fisher, double lambda) {
  check_ewc_inputs(model, anchor, fisher);
  if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
  return lambda * (fisher.values.array() *
                   (model.values - anchor.values).array().square())
                      .sum();
}

Vector ewc_penalty_gradient(const ModelParams& model, const ModelParams& anchor,
                            const FisherDiag& fisher, double lambda) {
  check_ewc_inputs(model, anchor, fisher);
  return 2.0 * lambda * fisher.values.array() *
         (model.values - anchor.values).array();
}

ModelParams ewc_sgd_epochs(const ModelParams& model, const LabeledDataset& data,
                           const ModelParams& anchor, const FisherDiag& fisher,
                           const TrainConfig& cfg, Seed seed) {
  check_ewc_inputs(model, anchor, fisher);
  // lambda == 0 must reproduce plain SGD bit for bit.
  if (cfg.ewc_lambda == 0.0) return run_sgd(model, data, cfg, seed, nullptr);
  const EwcTerm term{&anchor, &fisher, cfg.ewc_lambda};
  return run_sgd(model, data, cfg, seed, &term);
}

FisherDiag compute_fisher_diag(const ModelParams& model,
                               const LabeledDataset& data) {
  check_compatible(model, data);
  Vector acc = Vector::Zero(model.size());
  Vector grad(model.size());
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    const RowMatrix x = data.features.row(r);
    kernels::loss_and_gradient<double>(model.layer_dims, model.values.data(), x,
                                       data.labels.segment(r, 1), grad.data());
    acc.array() += grad.array().square();
  }
  return FisherDiag{acc / static_cast<double>(data.size())};
}

}  // namespace fedfmc
