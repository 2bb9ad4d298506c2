#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fedfmc/eigen_types.hpp"

// Batched forward/backward passes of a ReLU MLP over a flat parameter buffer.
// Templated on the scalar so the same kernel can run in extended precision.

namespace fedfmc::kernels {

template <typename Scalar>
using ConstWeightMap = Eigen::Map<const RowMatrixX<Scalar>>;
template <typename Scalar>
using ConstBiasMap = Eigen::Map<const VectorX<Scalar>>;
template <typename Scalar>
using WeightMap = Eigen::Map<RowMatrixX<Scalar>>;
template <typename Scalar>
using BiasMap = Eigen::Map<VectorX<Scalar>>;

/// Offsets of each layer's weight block inside the flat buffer.
inline std::vector<Eigen::Index> layer_offsets(std::span<const int> dims) {
  std::vector<Eigen::Index> offsets;
  offsets.reserve(dims.size());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    offsets.push_back(off);
    off += Eigen::Index{dims[l]} * dims[l + 1] + dims[l + 1];
  }
  offsets.push_back(off);
  return offsets;
}

/// Row-wise numerically stable log-softmax.
template <typename Derived>
auto log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  RowMatrixX<Scalar> out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Scalar m = out.row(r).maxCoeff();
    const Scalar lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

/// Logits for a batch (rows of `x`). Keeps pre-activations when `cache` is set.
template <typename Scalar>
RowMatrixX<Scalar> forward(std::span<const int> dims, const Scalar* params,
                           const RowMatrixX<Scalar>& x,
                           std::vector<RowMatrixX<Scalar>>* cache = nullptr) {
  const auto offsets = layer_offsets(dims);
  const std::size_t layers = dims.size() - 1;
  RowMatrixX<Scalar> act = x;
  if (cache) {
    cache->clear();
    cache->push_back(act);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    ConstWeightMap<Scalar> w(params + offsets[l], dims[l + 1], dims[l]);
    ConstBiasMap<Scalar> b(params + offsets[l] + w.size(), dims[l + 1]);
    RowMatrixX<Scalar> z = act * w.transpose();
    z.rowwise() += b.transpose();
    if (l + 1 < layers) {
      if (cache) cache->push_back(z);
      act = z.cwiseMax(Scalar(0));
    } else {
      act = std::move(z);
    }
  }
  return act;
}

/// Mean cross-entropy of the batch; writes d(mean loss)/d(params) to `grad`.
template <typename Scalar>
Scalar loss_and_gradient(std::span<const int> dims, const Scalar* params,
                         const RowMatrixX<Scalar>& x,
                         const Eigen::Ref<const IndexVector>& y,
                         Scalar* grad) {
  const auto offsets = layer_offsets(dims);
  const std::size_t layers = dims.size() - 1;
  const Eigen::Index batch = x.rows();

  // cache[0] = input, cache[l] = pre-activation of hidden layer l.
  std::vector<RowMatrixX<Scalar>> cache;
  const RowMatrixX<Scalar> logits = forward<Scalar>(dims, params, x, &cache);
  const RowMatrixX<Scalar> logp = log_softmax_rows(logits);

  Scalar loss = 0;
  for (Eigen::Index r = 0; r < batch; ++r) loss -= logp(r, y(r));
  loss /= Scalar(batch);

  RowMatrixX<Scalar> delta = logp.array().exp();
  for (Eigen::Index r = 0; r < batch; ++r) delta(r, y(r)) -= Scalar(1);
  delta /= Scalar(batch);

  for (std::size_t l = layers; l-- > 0;) {
    WeightMap<Scalar> gw(grad + offsets[l], dims[l + 1], dims[l]);
    BiasMap<Scalar> gb(grad + offsets[l] + gw.size(), dims[l + 1]);
    const RowMatrixX<Scalar> input =
        l == 0 ? cache[0] : RowMatrixX<Scalar>(cache[l].cwiseMax(Scalar(0)));
    gw.noalias() = delta.transpose() * input;
    gb = delta.colwise().sum().transpose();
    if (l == 0) break;
    ConstWeightMap<Scalar> w(params + offsets[l], dims[l + 1], dims[l]);
    RowMatrixX<Scalar> back = delta * w;
    delta = (cache[l].array() > Scalar(0)).select(back, Scalar(0));
  }
  return loss;
}

}  // namespace fedfmc::kernels
