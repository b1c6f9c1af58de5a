#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "stratscope/counterfactual.hpp"
#include "support.hpp"

using namespace stratscope;
using namespace stratscope::testing;

namespace {

const Timestamp kEnd{kDay0 + 6, 15 * 360000};

// Tape with one trade per minute on day 0 and day 1, price from `price_of(k)`.
template <class PriceOf>
TradeTape make_tape(std::string stock, std::size_t n, PriceOf price_of, Price close) {
  TradeTape tape{std::move(stock), {}, close};
  for (std::size_t k = 0; k < n; ++k) {
    Timestamp t{kDay0 + static_cast<std::int32_t>(k / 300),
                static_cast<std::int32_t>(9 * 360000 + 30 * 6000 + (k % 300) * 6000)};
    tape.points.push_back({t, price_of(k)});
  }
  return tape;
}

InvestorBook book_with(std::string investor, std::vector<ActivitySequence> seqs) {
  InvestorBook b;
  b.investor_id = std::move(investor);
  b.sequences = std::move(seqs);
  for (auto& s : b.sequences) s.investor_id = b.investor_id;
  return b;
}

ActivitySequence round_trips(std::string stock, int trips, double price, std::int32_t day = kDay0) {
  std::vector<Entry> raw;
  for (int i = 0; i < trips; ++i) {
    raw.push_back(buy(100, price, Timestamp{day, 10 * 360000 + i * 2000}, 2 * i));
    raw.push_back(sell(100, price, Timestamp{day, 10 * 360000 + i * 2000 + 1000}, 2 * i + 1));
  }
  raw.push_back(buy(200, price, Timestamp{day, 14 * 360000}, 999));
  return build_activity_sequence("", std::move(stock), raw, units(price), kEnd);
}

}  // namespace

TEST(Tape, CollapsesEqualTimestampsToLastTrade) {
  auto mk = [](double px, Timestamp t, std::uint64_t seq) {
    Fill f;
    f.stock_id = "S1";
    f.price = units(px);
    f.size = 100;
    f.time = t;
    f.sequence = seq;
    return f;
  };
  std::vector<Fill> fills{mk(10, at("09:31:00.00"), 0), mk(10.1, at("09:31:00.00"), 1), mk(10.2, at("09:32:00.00"), 2)};
  auto tapes = build_tapes(fills, {{"S1", units(10)}});
  ASSERT_EQ(tapes.at("S1").points.size(), 2u);
  EXPECT_EQ(tapes.at("S1").price_at(at("09:31:00.00")), units(10.1));
  EXPECT_THROW(tapes.at("S1").price_at(at("09:33:00.00")), std::out_of_range);
}

TEST(Sampling, ForcedAndExhaustiveDraws) {
  SplitMix64 rng(1);
  auto one = make_tape("S1", 1, [](std::size_t) { return units(10); }, units(10));
  auto t1 = sample_random_times(1, one, rng);
  ASSERT_EQ(t1.size(), 1u);
  EXPECT_EQ(t1[0], one.points[0].time);

  auto tape = make_tape("S1", 40, [](std::size_t) { return units(10); }, units(10));
  auto all = sample_random_times(40, tape, rng);
  for (std::size_t k = 0; k < 40; ++k) EXPECT_EQ(all[k], tape.points[k].time);
  EXPECT_THROW(sample_random_times(41, tape, rng), InsufficientTape);
}

TEST(Sampling, StrictlyIncreasingSubsetOfTape) {
  SplitMix64 rng(2);
  auto tape = make_tape("S1", 500, [](std::size_t) { return units(10); }, units(10));
  std::set<Timestamp> on_tape;
  for (const auto& p : tape.points) on_tape.insert(p.time);
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t count = 1 + uniform_below(rng, 499);
    auto t = sample_random_times(count, tape, rng);
    ASSERT_EQ(t.size(), count);
    for (std::size_t k = 0; k < t.size(); ++k) {
      ASSERT_TRUE(on_tape.contains(t[k]));
      if (k > 0) ASSERT_LT(t[k - 1], t[k]);
    }
  }
}

TEST(Sampling, IndicesAreUniform) {
  // Each index should be picked with probability count / size.
  SplitMix64 rng(3);
  const std::size_t size = 20, count = 5, trials = 40000;
  std::vector<double> hits(size, 0);
  for (std::size_t t = 0; t < trials; ++t)
    for (auto i : sample_tape_indices(count, size, rng)) hits[i] += 1;
  const double expect = static_cast<double>(trials * count) / size;
  for (double h : hits) EXPECT_NEAR(h, expect, 5 * std::sqrt(expect));
  // The dense branch too.
  std::vector<double> dense(size, 0);
  for (std::size_t t = 0; t < trials; ++t)
    for (auto i : sample_tape_indices(15, size, rng)) dense[i] += 1;
  const double expect_dense = static_cast<double>(trials * 15) / size;
  for (double h : dense) EXPECT_NEAR(h, expect_dense, 5 * std::sqrt(expect_dense));
}

TEST(Reprice, KeepsVolumesAndVirtualClose) {
  auto tape = make_tape("S1", 100, [](std::size_t k) { return units(10.0 + 0.01 * static_cast<double>(k)); },
                        units(12));
  auto seq = round_trips("S1", 3, 10.0);
  std::size_t real = 0;
  for (const auto& e : seq.entries) real += e.virtual_close ? 0 : 1;
  SplitMix64 rng(4);
  auto times = sample_random_times(real, tape, rng);
  auto out = reprice(seq, times, tape);
  ASSERT_EQ(out.entries.size(), seq.entries.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < seq.entries.size(); ++i) {
    EXPECT_EQ(out.entries[i].volume, seq.entries[i].volume);
    if (seq.entries[i].virtual_close) {
      EXPECT_EQ(out.entries[i], seq.entries[i]);
    } else {
      EXPECT_EQ(out.entries[i].time, times[k]);
      EXPECT_EQ(out.entries[i].notional, tape.price_at(times[k]) * out.entries[i].shares());
      ++k;
    }
  }
}

TEST(Replica, NullTapeZeroFeesGivesZeroReturn) {
  TapeTable tapes{{"S1", make_tape("S1", 300, [](std::size_t) { return units(10); }, units(10))}};
  auto book = book_with("T1", {round_trips("S1", 4, 10.0)});
  CounterfactualSettings s;
  s.replicas = 50;
  FeeSchedules zero{FeeSchedule::zero(), FeeSchedule::zero()};
  auto mc = run_monte_carlo(std::span(&book, 1), tapes, zero, {}, s);
  ASSERT_EQ(mc.replicas[0].size(), 50u);
  for (const auto& r : mc.replicas[0]) {
    EXPECT_EQ(r.R, 0.0);
    EXPECT_EQ(r.label, Outcome::flat);
    EXPECT_EQ(r.J, 10);
  }
  auto with_fees = run_monte_carlo(std::span(&book, 1), tapes, FeeSchedules{}, {}, s);
  for (const auto& r : with_fees.replicas[0]) EXPECT_LT(r.R, 0.0);
}

TEST(Replica, RisingTapeRewardsBuyThenSell) {
  TapeTable tapes{{"S1", make_tape("S1", 300, [](std::size_t k) { return Money::from_mils(1000 << (k / 40)); },
                                   units(1000))}};
  std::vector<Entry> raw{buy(100, 1, Timestamp{kDay0, 10 * 360000}, 0), sell(100, 1, Timestamp{kDay0, 11 * 360000}, 1)};
  auto book = book_with("T1", {build_activity_sequence("", "S1", raw, units(1), kEnd)});
  FeeSchedules zero{FeeSchedule::zero(), FeeSchedule::zero()};
  CounterfactualSettings s;
  s.replicas = 200;
  auto mc = run_monte_carlo(std::span(&book, 1), tapes, zero, {}, s);
  for (const auto& r : mc.replicas[0]) EXPECT_GE(r.R, 0.0);
  std::size_t positive = 0;
  for (const auto& r : mc.replicas[0]) positive += r.R > 0;
  EXPECT_GT(positive, 150u);  // equal only when both draws land in one doubling step
}

TEST(Replica, DeterministicAndKeyedByIds) {
  TapeTable tapes{{"S1", make_tape("S1", 300, [](std::size_t k) { return units(10.0 + 0.01 * (k % 17)); },
                                   units(10))},
                  {"S2", make_tape("S2", 300, [](std::size_t k) { return units(5.0 + 0.01 * (k % 7)); }, units(5))}};
  auto book = book_with("T1", {round_trips("S1", 3, 10.0), round_trips("S2", 2, 5.0)});
  CounterfactualSettings s;
  auto a = run_replica(book, 0, 17, tapes, FeeSchedule::a_share(), {}, s);
  auto b = run_replica(book, 5, 17, tapes, FeeSchedule::a_share(), {}, s);  // index is only a label
  EXPECT_EQ(a.R, b.R);
  EXPECT_EQ(a.dt_days, b.dt_days);
  auto c = run_replica(book, 0, 18, tapes, FeeSchedule::a_share(), {}, s);
  EXPECT_NE(a.R, c.R);
  auto renamed = book_with("T2", book.sequences);
  EXPECT_NE(run_replica(renamed, 0, 17, tapes, FeeSchedule::a_share(), {}, s).R, a.R);
  EXPECT_EQ(a.J, 14);
}

TEST(Replica, StrictModeLeavesSanitizedInputAlone) {
  TapeTable tapes{{"S1", make_tape("S1", 300, [](std::size_t k) { return units(10.0 + 0.01 * (k % 17)); },
                                   units(10))}};
  auto book = book_with("T1", {round_trips("S1", 5, 10.0)});
  CounterfactualSettings loose, strict;
  strict.strict_position_mode = true;
  for (std::uint32_t r = 0; r < 50; ++r) {
    auto x = run_replica(book, 0, r, tapes, FeeSchedule::a_share(), {}, loose);
    auto y = run_replica(book, 0, r, tapes, FeeSchedule::a_share(), {}, strict);
    EXPECT_EQ(x.R, y.R);
  }
}

TEST(MonteCarlo, SkipsInvestorsWithoutTape) {
  TapeTable tapes{{"S1", make_tape("S1", 5, [](std::size_t) { return units(10); }, units(10))}};
  std::vector<InvestorBook> books{book_with("A", {round_trips("S1", 1, 10.0)}),
                                  book_with("B", {round_trips("S9", 1, 10.0)}),
                                  book_with("C", {round_trips("S1", 4, 10.0)})};
  CounterfactualSettings s;
  s.replicas = 3;
  auto mc = run_monte_carlo(books, tapes, FeeSchedules{}, {}, s);
  EXPECT_EQ(mc.replicas[0].size(), 3u);
  EXPECT_TRUE(mc.replicas[1].empty());  // no tape
  EXPECT_TRUE(mc.replicas[2].empty());  // 9 real entries > 5 tape points
  EXPECT_EQ(mc.diagnostics.size(), 2u);
}

TEST(MonteCarlo, SingleReplicaSummaryEqualsThatReplica) {
  TapeTable tapes{{"S1", make_tape("S1", 300, [](std::size_t k) { return units(10.0 + 0.01 * (k % 13)); },
                                   units(10))}};
  auto book = book_with("T1", {round_trips("S1", 2, 10.0)});
  CounterfactualSettings s;
  s.replicas = 1;
  auto mc = run_monte_carlo(std::span(&book, 1), tapes, FeeSchedules{}, {}, s);
  auto pooled = mc.pooled();
  ASSERT_EQ(pooled.size(), 1u);
  std::vector<double> edges{1, 2, 4, 8, 16};
  auto series = summarize_replicas(pooled, BinKind::frequency, edges);
  std::size_t nonempty = 0;
  for (const auto& b : series[0].bins) {
    if (b.count == 0) continue;
    ++nonempty;
    EXPECT_EQ(b.mean_R, pooled[0].R);
    EXPECT_EQ(b.std_R, 0.0);
  }
  EXPECT_EQ(nonempty, 1u);
}

TEST(MonteCarlo, WorkerCountDoesNotChangeResults) {
  TapeTable tapes{{"S1", make_tape("S1", 600, [](std::size_t k) { return units(10.0 + 0.01 * (k % 29)); },
                                   units(10))},
                  {"S2", make_tape("S2", 600, [](std::size_t k) { return units(3.0 + 0.01 * (k % 11)); }, units(3))}};
  std::vector<InvestorBook> books;
  for (int i = 0; i < 40; ++i)
    books.push_back(book_with("T" + std::to_string(i), {round_trips(i % 2 ? "S1" : "S2", 1 + i % 5, 10.0)}));
  CounterfactualSettings s;
  s.replicas = 64;
  s.workers = 1;
  auto one = run_monte_carlo(books, tapes, FeeSchedules{}, {}, s);
  s.workers = 8;
  auto eight = run_monte_carlo(books, tapes, FeeSchedules{}, {}, s);
  auto p1 = one.pooled(), p8 = eight.pooled();
  ASSERT_EQ(p1.size(), p8.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1[i].R, p8[i].R);
    EXPECT_EQ(p1[i].dt_days, p8[i].dt_days);
    EXPECT_EQ(p1[i].J, p8[i].J);
  }
  ReplicaBinner b1(BinKind::frequency, {}), b8(BinKind::frequency, {});
  for (const auto& r : p1) b1.add(r);
  for (const auto& r : p8) b8.add(r);
  std::ostringstream x, y;
  write_replica_summary(x, b1.finish());
  write_replica_summary(y, b8.finish());
  EXPECT_EQ(x.str(), y.str());
}

TEST(MonteCarlo, ExchangeableTapeHasZeroMeanReturn) {
  // Prices i.i.d. around a constant: pooled mean within 3 standard errors of 0.
  SplitMix64 px(9);
  std::vector<Price> draws;
  for (int k = 0; k < 600; ++k) draws.push_back(units(10.0 + 0.01 * static_cast<double>(uniform_below(px, 41)) - 0.2));
  TapeTable tapes{{"S1", make_tape("S1", 600, [&](std::size_t k) { return draws[k]; }, units(10))}};
  std::vector<Entry> raw{buy(100, 10, Timestamp{kDay0, 10 * 360000}, 0),
                         sell(100, 10, Timestamp{kDay0, 11 * 360000}, 1)};
  auto book = book_with("T1", {build_activity_sequence("", "S1", raw, units(10), kEnd)});
  CounterfactualSettings s;
  s.replicas = 2000;
  FeeSchedules zero{FeeSchedule::zero(), FeeSchedule::zero()};
  auto mc = run_monte_carlo(std::span(&book, 1), tapes, zero, {}, s);
  double sum = 0, sum2 = 0;
  for (const auto& r : mc.replicas[0]) {
    sum += r.R;
    sum2 += r.R * r.R;
  }
  const double n = 2000;
  double mean = sum / n;
  double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
  EXPECT_LE(std::abs(mean), 3 * sd / std::sqrt(n));
}

TEST(Binner, MatchesBatchSummary) {
  std::vector<ReplicaResult> results;
  SplitMix64 rng(12);
  for (std::uint32_t i = 0; i < 3000; ++i) {
    ReplicaResult r;
    r.investor = i / 10;
    r.replica = i % 10;
    r.J = 1 + static_cast<std::int64_t>(uniform_below(rng, 200));
    r.dt_days = 0.01 + 30 * uniform01(rng);
    r.R = uniform01(rng) - 0.5;
    r.label = outcome_of(r.R);
    results.push_back(r);
  }
  for (auto kind : {BinKind::frequency, BinKind::holding_time}) {
    ReplicaBinner binner(kind, {});
    for (const auto& r : results) binner.add(r);
    auto streamed = binner.finish();
    std::vector<Observation> obs;
    for (const auto& r : results) obs.push_back({static_cast<double>(r.J), r.dt_days, r.R});
    auto batch = summarize_replicas(results, kind, edges_for(kind, obs, {}));
    ASSERT_EQ(streamed.size(), 3u);
    for (std::size_t p = 0; p < 3; ++p) {
      ASSERT_EQ(streamed[p].bins.size(), batch[p].bins.size());
      for (std::size_t k = 0; k < batch[p].bins.size(); ++k) {
        EXPECT_EQ(streamed[p].bins[k].count, batch[p].bins[k].count);
        EXPECT_NEAR(streamed[p].bins[k].mean_R, batch[p].bins[k].mean_R, 1e-12);
        EXPECT_NEAR(streamed[p].bins[k].std_R, batch[p].bins[k].std_R, 1e-12);
        EXPECT_DOUBLE_EQ(streamed[p].bins[k].center, batch[p].bins[k].center);
      }
    }
  }
}
