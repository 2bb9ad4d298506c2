#pragma once

#include <vector>

#include "fedfmc/data.hpp"
#include "fedfmc/eigen_types.hpp"
#include "fedfmc/seed.hpp"

namespace fedfmc {

/// Number of parameters of a dense MLP with the given widths:
/// sum over layers of in*out weights plus out biases.
Eigen::Index parameter_count(const std::vector<int>& layer_dims);

/// Flat MLP parameters. Layer-major; within a layer the out x in weight matrix
/// (row-major) comes first, then the out biases.
struct ModelParams {
  std::vector<int> layer_dims;
  Vector values;

  ModelParams() = default;
  ModelParams(std::vector<int> dims, Vector v);

  Eigen::Index size() const noexcept { return values.size(); }
  int input_dim() const { return layer_dims.front(); }
  int num_classes() const { return layer_dims.back(); }
  bool same_layout(const ModelParams& other) const {
    return layer_dims == other.layer_dims;
  }
  bool all_finite() const { return values.allFinite(); }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.layer_dims == b.layer_dims && a.values.size() == b.values.size() &&
           a.values == b.values;
  }
};

/// Diagonal of the empirical Fisher information, same layout as the model.
struct FisherDiag {
  Vector values;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int local_epochs = 1;
  int batch_size = 16;
  double ewc_lambda = 0.0;

  void validate() const;
};

struct EvalResult {
  double mean_loss = 0.0;  // nats
  double accuracy = 0.0;   // percent
};

/// He-style init: weights ~ N(0, 2 / fan_in), biases zero.
ModelParams init_model(const std::vector<int>& layer_dims, Seed seed);

/// Mean cross-entropy and top-1 accuracy. Argmax ties go to the lowest class.
EvalResult forward_eval(const ModelParams& model, const LabeledDataset& data);

/// Softmax class probabilities, one row per example.
RowMatrix predict_proba(const ModelParams& model, const RowMatrix& features);

/// Mean cross-entropy over `data` and its gradient w.r.t. the parameters.
double loss_and_gradient(const ModelParams& model, const LabeledDataset& data,
                         Vector& gradient);

/// Mini-batch SGD on mean cross-entropy. The input model is not modified.
ModelParams sgd_epochs(const ModelParams& model, const LabeledDataset& data,
                       const TrainConfig& cfg, Seed seed);

/// lambda * sum_i fisher_i * (theta_i - anchor_i)^2
double ewc_penalty(const ModelParams& model, const ModelParams& anchor,
                   const FisherDiag& fisher, double lambda);

/// Gradient of ewc_penalty w.r.t. the model parameters.
Vector ewc_penalty_gradient(const ModelParams& model, const ModelParams& anchor,
                            const FisherDiag& fisher, double lambda);

/// sgd_epochs on cross-entropy + ewc_penalty with lambda = cfg.ewc_lambda.
ModelParams ewc_sgd_epochs(const ModelParams& model, const LabeledDataset& data,
                           const ModelParams& anchor, const FisherDiag& fisher,
                           const TrainConfig& cfg, Seed seed);

/// Empirical Fisher: mean over examples of the squared per-example gradient of
/// the observed label's log-likelihood.
FisherDiag compute_fisher_diag(const ModelParams& model,
                               const LabeledDataset& data);

}  // namespace fedfmc
