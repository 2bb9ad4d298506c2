#pragma once

// Slow reference implementations used as test oracles. Nothing here calls into
// the library's numerical code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fedfmc/data.hpp"
#include "fedfmc/learner.hpp"

namespace oracle {

using Real = long double;

/// Class probabilities of one example, plain loops in long double.
inline std::vector<Real> forward(const std::vector<int>& dims, const std::vector<Real>& p,
                                 const std::vector<Real>& x) {
  std::vector<Real> a = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    std::vector<Real> z(out);
    for (int o = 0; o < out; ++o) {
      Real s = 0;
      for (int i = 0; i < in; ++i) s += p[off + o * in + i] * a[i];
      z[o] = s + p[off + in * out + o];
    }
    off += in * out + out;
    if (l + 2 < dims.size())
      for (auto& v : z) v = std::max<Real>(v, 0);
    a = z;
  }
  const Real m = *std::max_element(a.begin(), a.end());
  Real sum = 0;
  for (auto& v : a) sum += (v = std::exp(v - m));
  for (auto& v : a) v /= sum;
  return a;
}

inline std::vector<Real> to_real(const fedfmc::Vector& v) {
  return {v.data(), v.data() + v.size()};
}

inline std::vector<Real> row(const fedfmc::LabeledDataset& d, Eigen::Index i) {
  std::vector<Real> x(static_cast<std::size_t>(d.feature_dim()));
  for (Eigen::Index j = 0; j < d.feature_dim(); ++j) x[j] = d.features(i, j);
  return x;
}

/// -log p(y) of one example.
inline Real example_nll(const std::vector<int>& dims, const std::vector<Real>& p,
                        const fedfmc::LabeledDataset& d, Eigen::Index i) {
  return -std::log(forward(dims, p, row(d, i))[d.labels(i)]);
}

inline Real mean_nll(const std::vector<int>& dims, const std::vector<Real>& p,
                     const fedfmc::LabeledDataset& d) {
  Real s = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) s += example_nll(dims, p, d, i);
  return s / d.size();
}

inline Real accuracy(const std::vector<int>& dims, const std::vector<Real>& p,
                     const fedfmc::LabeledDataset& d) {
  int hits = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const auto q = forward(dims, p, row(d, i));
    hits += std::max_element(q.begin(), q.end()) - q.begin() == d.labels(i);
  }
  return Real{100} * hits / d.size();
}

/// Central differences of f at p.
inline std::vector<Real> central_diff(const std::function<Real(const std::vector<Real>&)>& f,
                                      std::vector<Real> p, Real h = 1e-6L) {
  std::vector<Real> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real keep = p[i];
    p[i] = keep + h;
    const Real up = f(p);
    p[i] = keep - h;
    const Real down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
template <class A, class B>
double max_rel_err(const A& a, const B& b, double floor = 1e-4) {
  double worst = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(a.size()); ++i) {
    const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
    worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
  }
  return worst;
}

/// sum_k n_k w_k / sum_k n_k, one coordinate at a time.
inline std::vector<Real> weighted_sum(const std::vector<std::vector<Real>>& models,
                                      const std::vector<int>& counts) {
  Real total = 0;
  for (int c : counts) total += c;
  std::vector<Real> out(models.front().size(), 0);
  for (std::size_t k = 0; k < models.size(); ++k)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += counts[k] * models[k][i] / total;
  return out;
}

}  // namespace oracle
