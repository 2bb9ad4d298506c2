#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fedfmc/errors.hpp"
#include "fedfmc/learner.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fedfmc;

namespace {

LabeledDataset balanced(int classes, int per_class, int dim) {
  LabeledDataset d = testing::random_dataset(classes * per_class, dim, classes, 3);
  for (int i = 0; i < d.size(); ++i) d.labels(i) = i % classes;
  return d;
}

}  // namespace

TEST_CASE("init_model layout and statistics") {
  const auto m = init_model({4, 3}, 11);
  CHECK(m.size() == 15);
  CHECK(m.values.tail(3).isZero());
  CHECK(init_model({4, 3}, 11) == m);
  CHECK_FALSE(init_model({4, 3}, 12) == m);

  const auto big = init_model({784, 64, 10}, 7);
  const Eigen::Index n = 784 * 64;
  const auto w = big.values.head(n);
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(n));
  CHECK(std::abs(sd - std::sqrt(2.0 / 784)) < 0.2 * std::sqrt(2.0 / 784));
  CHECK(big.values.segment(n, 64).isZero());

  CHECK_THROWS_AS(init_model({}, 1), DimensionError);
  CHECK_THROWS_AS(init_model({5}, 1), DimensionError);
  CHECK_THROWS_AS(init_model({5, 0, 2}, 1), DimensionError);
}

TEST_CASE("ModelParams rejects a value vector of the wrong length") {
  CHECK_THROWS_AS(ModelParams({4, 3}, Vector::Zero(14)), DimensionError);
}

TEST_CASE("forward_eval on a zero model") {
  for (int c : {2, 3, 10}) {
    const auto data = balanced(c, 5, 4);
    const ModelParams zero({4, 6, c}, Vector::Zero(parameter_count({4, 6, c})));
    const auto r = forward_eval(zero, data);
    CHECK(r.mean_loss == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
    CHECK(r.accuracy == doctest::Approx(100.0 / c));
  }
}

TEST_CASE("forward_eval matches the loop oracle") {
  const std::vector<int> dims{5, 7, 3};
  for (unsigned s = 0; s < 5; ++s) {
    const auto data = testing::random_dataset(20, 5, 3, 100 + s);
    const auto model = testing::random_model(dims, 200 + s, 1.0);
    const auto r = forward_eval(model, data);
    const auto p = oracle::to_real(model.values);
    const double want = static_cast<double>(oracle::mean_nll(dims, p, data));
    CHECK(std::abs(r.mean_loss - want) / want < 1e-10);
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(oracle::accuracy(dims, p, data))));
  }
}

TEST_CASE("softmax rows sum to one") {
  const auto data = testing::random_dataset(50, 6, 4, 9);
  const auto model = testing::random_model({6, 8, 8, 4}, 9, 3.0);
  const RowMatrix p = predict_proba(model, data.features);
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
  CHECK((p.array() >= 0).all());
}

TEST_CASE("forward_eval rejects mismatched data") {
  const auto model = testing::random_model({5, 3}, 1);
  CHECK_THROWS_AS(forward_eval(model, testing::random_dataset(4, 6, 3, 1)), DimensionError);
  auto bad_label = testing::random_dataset(4, 5, 3, 1);
  bad_label.num_classes = 4;
  bad_label.labels(0) = 3;
  CHECK_THROWS_AS(forward_eval(model, bad_label), DimensionError);
  CHECK_THROWS(forward_eval(model, LabeledDataset{}));
}

TEST_CASE("backprop matches central differences on random small models") {
  const std::vector<std::vector<int>> shapes{{3, 2}, {4, 5, 3}, {2, 4, 4, 2}, {6, 8, 4}, {3, 3, 3, 3}};
  double worst = 0;
  int models = 0;
  for (unsigned s = 0; s < 25; ++s) {
    const auto& dims = shapes[s % shapes.size()];
    REQUIRE(parameter_count(dims) <= 100);
    const auto data = testing::random_dataset(8, dims.front(), dims.back(), 300 + s);
    const auto model = testing::random_model(dims, 400 + s);
    Vector g;
    loss_and_gradient(model, data, g);
    const auto fd = oracle::central_diff(
        [&](const std::vector<oracle::Real>& p) { return oracle::mean_nll(dims, p, data); },
        oracle::to_real(model.values));
    worst = std::max(worst, oracle::max_rel_err(g, fd));
    ++models;
  }
  CHECK(models >= 20);
  CHECK(worst <= 1e-4);
}

TEST_CASE("sgd_epochs basic contracts") {
  const auto data = testing::random_dataset(30, 4, 3, 5);
  const auto model = testing::random_model({4, 6, 3}, 6);
  TrainConfig cfg;
  cfg.local_epochs = 3;
  cfg.batch_size = 7;

  SUBCASE("deterministic and pure") {
    const auto copy = model;
    const auto a = sgd_epochs(model, data, cfg, 42);
    CHECK(a == sgd_epochs(model, data, cfg, 42));
    CHECK_FALSE(a == sgd_epochs(model, data, cfg, 43));
    CHECK(model == copy);
  }
  SUBCASE("vanishing learning rate leaves the model in place") {
    cfg.learning_rate = 1e-30;
    const auto out = sgd_epochs(model, data, cfg, 1);
    CHECK((out.values - model.values).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("single example step is lr times the finite-difference gradient") {
    const auto one = data.subset({0});
    cfg.local_epochs = 1;
    cfg.batch_size = 1;
    cfg.learning_rate = 0.1;
    const auto out = sgd_epochs(model, one, cfg, 1);
    const auto fd = oracle::central_diff(
        [&](const std::vector<oracle::Real>& p) { return oracle::mean_nll(model.layer_dims, p, one); },
        oracle::to_real(model.values));
    const Vector step = (model.values - out.values) / cfg.learning_rate;
    CHECK(oracle::max_rel_err(step, fd) < 1e-5);
  }
  SUBCASE("training lowers the loss") {
    cfg.local_epochs = 20;
    CHECK(forward_eval(sgd_epochs(model, data, cfg, 1), data).mean_loss <
          forward_eval(model, data).mean_loss);
  }
}

TEST_CASE("divergence reports the epoch") {
  const auto data = testing::random_dataset(20, 4, 3, 5);
  const auto model = testing::random_model({4, 6, 3}, 6, 5.0);
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.local_epochs = 4;
  try {
    sgd_epochs(model, data, cfg, 1);
    FAIL("expected divergence");
  } catch (const TrainingDivergence& e) {
    CHECK(e.epoch() >= 1);
    CHECK(e.epoch() <= 4);
  }
}

TEST_CASE("TrainConfig validation") {
  TrainConfig ok;
  CHECK_NOTHROW(ok.validate());
  for (auto mutate : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& c) { c.learning_rate = 0; }, [](TrainConfig& c) { c.local_epochs = 0; },
           [](TrainConfig& c) { c.batch_size = 0; }, [](TrainConfig& c) { c.ewc_lambda = -1; }}) {
    TrainConfig c;
    mutate(c);
    CHECK_THROWS(c.validate());
  }
}

TEST_CASE("ewc_penalty") {
  const ModelParams anchor({1, 1}, Vector::Zero(2));
  const ModelParams m({1, 1}, (Vector(2) << 3, -1).finished());
  const FisherDiag f{(Vector(2) << 1, 2).finished()};
  CHECK(ewc_penalty(m, anchor, f, 0.5) == doctest::Approx(5.5));
  CHECK(ewc_penalty(m, m, f, 0.5) == 0.0);
  CHECK(ewc_penalty(m, anchor, FisherDiag{Vector::Zero(2)}, 3.0) == 0.0);

  for (unsigned s = 0; s < 10; ++s) {
    const auto a = testing::random_model({3, 4, 2}, s);
    const auto b = testing::random_model({3, 4, 2}, s + 50);
    const FisherDiag fr{testing::random_model({3, 4, 2}, s + 99).values.cwiseAbs()};
    CHECK(ewc_penalty(a, b, fr, 0.7) == doctest::Approx(ewc_penalty(b, a, fr, 0.7)).epsilon(1e-14));
    CHECK(ewc_penalty(a, b, fr, 0.7) >= 0.0);
  }
  CHECK_THROWS_AS(ewc_penalty(m, anchor, FisherDiag{Vector::Zero(3)}, 1.0), DimensionError);
  CHECK_THROWS_AS(ewc_penalty(testing::random_model({2, 2}, 1), anchor, f, 1.0), DimensionError);
}

TEST_CASE("EWC total objective gradient matches central differences") {
  const std::vector<std::vector<int>> shapes{{1, 2}, {2, 3, 2}, {3, 4, 3}};
  double worst = 0;
  for (unsigned s = 0; s < 21; ++s) {
    // s == 0 is the two-parameter model: one weight, one bias.
    const auto d = s == 0 ? std::vector<int>{1, 1} : shapes[s % shapes.size()];
    const auto data = testing::random_dataset(6, d.front(), d.back(), 500 + s);
    const auto model = testing::random_model(d, 600 + s);
    const auto anchor = testing::random_model(d, 700 + s);
    const FisherDiag fisher{testing::random_model(d, 800 + s).values.cwiseAbs()};
    const double lambda = 0.3 + s;
    Vector g;
    loss_and_gradient(model, data, g);
    g += ewc_penalty_gradient(model, anchor, fisher, lambda);
    const auto fd = oracle::central_diff(
        [&](const std::vector<oracle::Real>& p) {
          oracle::Real pen = 0;
          for (std::size_t i = 0; i < p.size(); ++i) {
            const oracle::Real diff = p[i] - anchor.values[static_cast<Eigen::Index>(i)];
            pen += fisher.values[static_cast<Eigen::Index>(i)] * diff * diff;
          }
          return oracle::mean_nll(d, p, data) + lambda * pen;
        },
        oracle::to_real(model.values));
    worst = std::max(worst, oracle::max_rel_err(g, fd));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("ewc_sgd_epochs") {
  const auto data = testing::random_dataset(24, 3, 3, 21);
  const auto model = testing::random_model({3, 5, 3}, 22);
  const auto anchor = testing::random_model({3, 5, 3}, 23);
  TrainConfig cfg;
  cfg.local_epochs = 2;
  cfg.batch_size = 5;

  SUBCASE("lambda zero is plain SGD bit for bit") {
    const FisherDiag f{Vector::Ones(model.size())};
    CHECK(ewc_sgd_epochs(model, data, anchor, f, cfg, 9) == sgd_epochs(model, data, cfg, 9));
  }
  SUBCASE("huge lambda pins the model to the anchor") {
    cfg.ewc_lambda = 1e6;
    cfg.learning_rate = 1e-7;
    cfg.local_epochs = 5;
    const FisherDiag f{Vector::Constant(model.size(), 0.5)};
    const auto out = ewc_sgd_epochs(anchor, data, anchor, f, cfg, 9);
    CHECK((out.values - anchor.values).cwiseAbs().maxCoeff() < 1e-3);
    const auto pulled = ewc_sgd_epochs(model, data, anchor, f, cfg, 9);
    CHECK((pulled.values - anchor.values).cwiseAbs().maxCoeff() <
          (model.values - anchor.values).cwiseAbs().maxCoeff());
  }
  SUBCASE("deterministic") {
    cfg.ewc_lambda = 0.5;
    const FisherDiag f{Vector::Ones(model.size())};
    CHECK(ewc_sgd_epochs(model, data, anchor, f, cfg, 3) ==
          ewc_sgd_epochs(model, data, anchor, f, cfg, 3));
  }
  SUBCASE("mismatched fisher") {
    CHECK_THROWS_AS(ewc_sgd_epochs(model, data, anchor, FisherDiag{Vector::Ones(3)}, cfg, 1),
                    DimensionError);
  }
}

TEST_CASE("compute_fisher_diag") {
  const std::vector<int> dims{3, 4, 3};
  for (unsigned s = 0; s < 10; ++s) {
    const auto data = testing::random_dataset(3, 3, 3, 900 + s);
    const auto model = testing::random_model(dims, 950 + s);
    const auto f = compute_fisher_diag(model, data);
    CHECK((f.values.array() >= 0).all());
    CHECK(f.values.size() == model.size());

    std::vector<oracle::Real> want(static_cast<std::size_t>(model.size()), 0);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const auto g = oracle::central_diff(
          [&](const std::vector<oracle::Real>& p) { return oracle::example_nll(dims, p, data, i); },
          oracle::to_real(model.values));
      for (std::size_t k = 0; k < want.size(); ++k) want[k] += g[k] * g[k] / data.size();
    }
    CHECK(oracle::max_rel_err(f.values, want) <= 1e-4);

    LabeledDataset twice = data.subset({0, 1, 2, 0, 1, 2});
    CHECK((compute_fisher_diag(model, twice).values - f.values).cwiseAbs().maxCoeff() < 1e-15);
  }
}
