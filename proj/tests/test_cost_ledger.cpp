#include <doctest.h>

#include <random>

#include "fedfmc/cost_ledger.hpp"

using namespace fedfmc;

TEST_CASE("analytic formulas") {
  CHECK(analytic_updates(5, 10, 25) == 1250);
  CHECK(analytic_updates(0, 10, 25) == 0);
  CHECK(analytic_updates(5, 0, 25) == 0);
  CHECK(analytic_updates(5, 10, 0) == 0);
  CHECK(analytic_updates(1, 1, 1) == 1);

  CHECK(analytic_comm_bound(25, 10, 20) == 1300);
  CHECK(analytic_comm_bound(0, 10, 20) == 0);
  CHECK(analytic_comm_bound(3, 1, 2) == 12);
  CHECK(analytic_fedavg_transfers(25, 10, 20) == 1000);

  // Brute-force sum for a range of arguments.
  for (int T = 0; T < 40; ++T)
    for (int K = 0; K < 4; ++K)
      for (int N = K; N < 6; ++N) {
        std::int64_t want = std::int64_t{T} * (2 * K + N);
        for (int t = 1; t <= T / 4; ++t) want += std::int64_t{N} * (t - 1);
        CHECK(analytic_comm_bound(T, K, N) == want);
      }
  CHECK_THROWS(analytic_updates(-1, 1, 1));
  CHECK_THROWS(analytic_comm_bound(1, -1, 1));
}

TEST_CASE("ledger bookkeeping") {
  CostLedger l;
  CHECK(l.updates() == 0);
  CHECK(l.consistent());
  CHECK_THROWS(l.add_updates(1));

  l.begin_round(1, Phase::kFork);
  l.add_updates(12);
  l.add_transfers(24);
  l.add_transfers(3);
  l.begin_round(2, Phase::kFork);
  l.add_updates(12);
  l.begin_round(3, Phase::kMerge);
  l.add_transfers(5);

  CHECK(l.updates() == 24);
  CHECK(l.transfers() == 32);
  CHECK(l.updates(Phase::kFork) == 24);
  CHECK(l.transfers(Phase::kFork) == 27);
  CHECK(l.transfers(Phase::kMerge) == 5);
  REQUIRE(l.per_round().size() == 3);
  CHECK(l.per_round()[0].transfers_delta == 27);
  CHECK(l.consistent());

  CHECK_THROWS(l.add_updates(-1));
  CHECK_THROWS(l.add_transfers(-1));
  CHECK_THROWS(l.begin_round(2, Phase::kMerge));

  const auto copy = CostLedger::from_entries(l.per_round());
  CHECK(copy.updates() == l.updates());
  CHECK(copy.transfers() == l.transfers());
  CHECK(copy.consistent());
}

TEST_CASE("ledger totals equal the sum of random deltas") {
  std::mt19937_64 rng(3);
  CostLedger l;
  std::int64_t u = 0, t = 0;
  for (int r = 1; r <= 200; ++r) {
    l.begin_round(r, r < 120 ? Phase::kFork : Phase::kMerge);
    const auto du = static_cast<std::int64_t>(rng() % 50), dt = static_cast<std::int64_t>(rng() % 90);
    l.add_updates(du);
    l.add_transfers(dt);
    u += du;
    t += dt;
    CHECK(l.updates() == u);
    CHECK(l.transfers() == t);
  }
  CHECK(l.consistent());
}

TEST_CASE("verify_against_bound") {
  SUBCASE("vacuous") {
    const auto v = verify_against_bound(CostLedger{}, 0, 10, 20, true);
    CHECK(v.measured_transfers == 0);
    CHECK(v.bound == 0);
    CHECK(v.passed());
  }
  SUBCASE("no-fork run hits the base term exactly") {
    CostLedger l;
    for (int r = 1; r <= 25; ++r) {
      l.begin_round(r, Phase::kFork);
      l.add_transfers(2 * 10);
      l.add_transfers(20);
    }
    const auto v = verify_against_bound(l, 25, 10, 20, true);
    CHECK(v.measured_transfers == 1000);
    CHECK(v.base_term == 1000);
    CHECK(v.base_term_equal);
    CHECK(v.slack == 300);
    CHECK(v.passed());
  }
  SUBCASE("a never-forked run off the base term fails") {
    CostLedger l;
    l.begin_round(1, Phase::kFork);
    l.add_transfers(39);
    CHECK_FALSE(verify_against_bound(l, 1, 10, 20, true).passed());
  }
  SUBCASE("overrun names the first offending round and ignores merge rounds") {
    CostLedger l;
    for (int r = 1; r <= 25; ++r) {
      l.begin_round(r, Phase::kFork);
      l.add_transfers(r == 7 ? 400 : 40);
    }
    l.begin_round(26, Phase::kMerge);
    l.add_transfers(100000);
    const auto v = verify_against_bound(l, 25, 10, 20, false);
    CHECK(v.measured_transfers == 1360);
    CHECK_FALSE(v.within_bound);
    CHECK(v.slack == -60);
    REQUIRE(v.first_offending_round.has_value());
    CHECK(*v.first_offending_round == 24);  // 23 * 40 + 400 = 1320
    CHECK_FALSE(v.summary().empty());
  }
}
