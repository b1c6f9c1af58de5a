#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "stratscope/ledger.hpp"
#include "support.hpp"

using namespace stratscope;
using namespace stratscope::testing;

namespace {

// The worked examples use b = 0.25%.
FeeSchedule example_schedule(Market m) {
  FeeSchedule s = m == Market::A ? FeeSchedule::a_share() : FeeSchedule::b_share();
  s.brokerage = parse_rate("0.25%");
  return s;
}

const Timestamp kEnd{kDay0 + 30, 15 * 360000};

}  // namespace

TEST(Aggregate, VolumeWeightedPriceAndLastTime) {
  std::vector<FillLeg> legs{{100, units(10.0), at("09:31:00.00"), 1}, {200, units(10.3), at("09:32:00.00"), 2}};
  auto e = aggregate_fills_to_entry(legs, Side::sell, 300);
  ASSERT_TRUE(e);
  EXPECT_EQ(e->volume, 300);
  EXPECT_EQ(e->notional, units(3060.0));
  EXPECT_DOUBLE_EQ(e->price(), 10.2);
  EXPECT_EQ(e->time, at("09:32:00.00"));
}

TEST(Aggregate, IdentityAndConstantPrice) {
  std::vector<FillLeg> one{{100, units(10.0), at("09:31:00.00"), 1}};
  auto e = aggregate_fills_to_entry(one, Side::buy);
  ASSERT_TRUE(e);
  EXPECT_EQ(e->volume, -100);
  EXPECT_DOUBLE_EQ(e->price(), 10.0);

  std::vector<FillLeg> three(3, FillLeg{50, units(9.5), at("09:31:00.00"), 0});
  EXPECT_DOUBLE_EQ(aggregate_fills_to_entry(three, Side::buy)->price(), 9.5);
  EXPECT_FALSE(aggregate_fills_to_entry({}, Side::buy));
  EXPECT_THROW(aggregate_fills_to_entry(three, Side::buy, 100), std::invalid_argument);
}

TEST(Sanitize, UncoveredSellDropped) {
  std::vector<Entry> raw{sell(100, 10, at("09:31:00.00"))};
  auto seq = build_activity_sequence("T1", "S1", raw, units(12), kEnd);
  EXPECT_TRUE(seq.entries.empty());
}

TEST(Sanitize, VirtualCloseOut) {
  std::vector<Entry> raw{buy(100, 10, at("09:31:00.00"))};
  auto seq = build_activity_sequence("T1", "S1", raw, units(12), kEnd);
  ASSERT_EQ(seq.entries.size(), 2u);
  EXPECT_EQ(seq.entries[0].volume, -100);
  EXPECT_EQ(seq.entries[1].volume, 100);
  EXPECT_EQ(seq.entries[1].notional, units(1200));
  EXPECT_EQ(seq.entries[1].time, kEnd);
  EXPECT_TRUE(seq.entries[1].virtual_close);
  EXPECT_THROW(build_activity_sequence("T1", "S1", raw, std::nullopt, kEnd), LedgerError);
}

TEST(Sanitize, OversizedSellTruncated) {
  std::vector<Entry> raw{buy(100, 10, at("09:31:00.00")), sell(150, 11, at("09:32:00.00"))};
  auto seq = build_activity_sequence("T1", "S1", raw, units(12), kEnd);
  ASSERT_EQ(seq.entries.size(), 2u);
  EXPECT_EQ(seq.entries[1].volume, 100);
  EXPECT_EQ(seq.entries[1].notional, units(1100));
  EXPECT_EQ(seq.net_volume(), 0);
}

TEST(Sanitize, RejectsUnorderedOrZeroEntries) {
  std::vector<Entry> unordered{buy(100, 10, at("09:32:00.00")), sell(100, 10, at("09:31:00.00"))};
  EXPECT_THROW(build_activity_sequence("T1", "S1", unordered, units(10), kEnd), std::invalid_argument);
  std::vector<Entry> zero{entry(0, 10, at("09:31:00.00"))};
  EXPECT_THROW(build_activity_sequence("T1", "S1", zero, units(10), kEnd), std::invalid_argument);
}

TEST(Sanitize, RandomSequencesBalanceAndStayLong) {
  SplitMix64 rng(29);
  for (int i = 0; i < 5000; ++i) {
    auto raw = random_entries(rng, 40);
    auto seq = build_activity_sequence("T1", "S1", raw, units(10), kEnd);
    ASSERT_EQ(seq.net_volume(), 0);
    ASSERT_TRUE(oracle::never_short(seq));
    for (std::size_t k = 1; k < seq.entries.size(); ++k) {
      const auto& a = seq.entries[k - 1];
      const auto& b = seq.entries[k];
      ASSERT_TRUE(a.time < b.time || (a.time == b.time && a.sequence < b.sequence));
    }
    for (const auto& e : seq.entries) ASSERT_NE(e.volume, 0);
  }
}

TEST(Cost, WorkedExamples) {
  EXPECT_EQ(transaction_cost(units(10000), Side::sell, example_schedule(Market::A)), units(36.88));
  EXPECT_EQ(transaction_cost(units(1000), Side::buy, example_schedule(Market::A)), units(5.00));
  EXPECT_EQ(transaction_cost(units(10000), Side::sell, example_schedule(Market::B)), units(38.41));
  EXPECT_EQ(transaction_cost(units(1100), Side::sell, example_schedule(Market::A)), units(6.10));
}

TEST(Cost, AgreesWithRationalOracle) {
  SplitMix64 rng(31);
  for (int i = 0; i < 20000; ++i) {
    FeeSchedule s = FeeSchedule::a_share();
    s.brokerage = Rate{static_cast<std::int64_t>(uniform_below(rng, 280000))};
    s.exchange = Rate{static_cast<std::int64_t>(uniform_below(rng, 1000 + 1))};
    s.stamp_duty = Rate{static_cast<std::int64_t>(uniform_below(rng, 200000))};
    s.minimum_fee = Money::from_mils(static_cast<std::int64_t>(uniform_below(rng, 10000)));
    Money notional = Money::from_mils(1 + static_cast<std::int64_t>(uniform_below(rng, 100000000000ull)));
    Side side = i % 2 ? Side::sell : Side::buy;
    EXPECT_EQ(transaction_cost(notional, side, s).mils(), oracle::cost_in_cents(notional, side, s,
                                                                                InvestorClass::individual) * 10);
  }
}

TEST(Cost, MonotoneInNotional) {
  for (auto side : {Side::buy, Side::sell}) {
    Money prev{};
    for (std::int64_t cents = 1; cents < 1000000; cents += 37) {
      Money c = transaction_cost(Money::from_cents(cents), side, FeeSchedule::a_share());
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(Cost, ScheduleValidation) {
  EXPECT_NO_THROW(FeeSchedule::a_share().validate());
  EXPECT_NO_THROW(FeeSchedule::zero().validate());
  FeeSchedule s;
  s.brokerage = parse_rate("0.29%");
  EXPECT_THROW(s.validate(), ConfigError);
  FeeSchedule t;
  t.brokerage_institution = Rate{-1};
  EXPECT_THROW(t.validate(), ConfigError);
  FeeSchedule u;
  u.brokerage_institution = parse_rate("0.1%");
  EXPECT_EQ(u.brokerage_for(InvestorClass::institution), parse_rate("0.1%"));
  EXPECT_EQ(u.brokerage_for(InvestorClass::individual), u.brokerage);
}

TEST(Earnings, WorkedRoundTrip) {
  auto seq = sequence_of({buy(100, 10, at("09:31:00.00")), sell(100, 11, at("10:31:00.00"))});
  auto e = stock_earnings(seq, example_schedule(Market::A), {});
  EXPECT_EQ(e.buy_capital, units(1000));
  EXPECT_EQ(e.sell_proceeds, units(1100));
  EXPECT_EQ(e.buy_cost, units(5.00));
  EXPECT_EQ(e.sell_cost, units(6.10));
  EXPECT_EQ(e.total_cost(), units(11.10));
  EXPECT_EQ(e.earnings(), units(88.90));

  std::vector<StockEarnings> per{e};
  auto R = portfolio_return(per);
  ASSERT_TRUE(R);
  EXPECT_NEAR(*R, 88.90 / 1005.00, 1e-15);
  EXPECT_NEAR(*R, 0.08846, 5e-6);
}

TEST(Earnings, EmptySequenceIsZero) {
  auto e = stock_earnings(sequence_of({}), FeeSchedule::a_share(), {});
  EXPECT_EQ(e, StockEarnings{});
  std::vector<StockEarnings> per{e};
  EXPECT_FALSE(portfolio_return(per));
}

TEST(Earnings, DividendOnHoldingsAtExDateOpen) {
  std::vector<Entry> raw{buy(100, 10, at(kDay0, "09:31:00.00"))};
  auto seq = build_activity_sequence("T1", "S1", raw, units(10), kEnd);
  std::vector<DividendEvent> div{{"S1", kDay0 + 5, units(0.12)}};
  auto e = stock_earnings(seq, FeeSchedule::zero(), div);
  EXPECT_EQ(e.dividends, units(12));
  EXPECT_EQ(e.earnings(), units(12));

  // Bought on the ex-date itself: not held at the open, no dividend.
  std::vector<DividendEvent> same_day{{"S1", kDay0, units(0.12)}};
  EXPECT_EQ(stock_earnings(seq, FeeSchedule::zero(), same_day).dividends, Money{});
}

TEST(Earnings, CancellationAndFlat) {
  StockEarnings gain{units(1000), units(1050), {}, {}, {}};
  StockEarnings loss{units(1000), units(950), {}, {}, {}};
  std::vector<StockEarnings> both{gain, loss};
  EXPECT_EQ(*portfolio_return(both), 0.0);
  EXPECT_EQ(outcome_of(0.0), Outcome::flat);
  EXPECT_EQ(outcome_of(0.1), Outcome::winner);
  EXPECT_EQ(outcome_of(-0.1), Outcome::loser);
}

TEST(Earnings, VirtualCloseCostsSwitch) {
  std::vector<Entry> raw{buy(100, 10, at("09:31:00.00"))};
  auto seq = build_activity_sequence("T1", "S1", raw, units(10), kEnd);
  auto charged = stock_earnings(seq, example_schedule(Market::A), {});
  LedgerOptions free_close;
  free_close.virtual_close_costs = false;
  auto waived = stock_earnings(seq, example_schedule(Market::A), {}, InvestorClass::individual, free_close);
  EXPECT_EQ(charged.sell_cost, units(6.00));
  EXPECT_EQ(waived.sell_cost, Money{});
}

TEST(Earnings, ZeroFeesConstantPriceEarnNothing) {
  SplitMix64 rng(37);
  for (int i = 0; i < 2000; ++i) {
    auto raw = random_entries(rng, 30);
    for (auto& e : raw) e.notional = units(7.5) * e.shares();
    auto seq = build_activity_sequence("T1", "S1", raw, units(7.5), kEnd);
    auto e = stock_earnings(seq, FeeSchedule::zero(), {});
    ASSERT_EQ(e.earnings(), Money{});
  }
}

TEST(Earnings, SummationOrderDoesNotMatter) {
  SplitMix64 rng(41);
  std::vector<StockEarnings> per;
  for (int i = 0; i < 50; ++i) {
    auto seq = build_activity_sequence("T1", "S" + std::to_string(i), random_entries(rng, 20), units(11), kEnd);
    per.push_back(stock_earnings(seq, FeeSchedule::a_share(), {}));
  }
  auto forward = portfolio_return(per);
  std::reverse(per.begin(), per.end());
  EXPECT_EQ(portfolio_return(per), forward);
}

TEST(Frequency, SumsEntryCounts) {
  std::vector<ActivitySequence> seqs{
      sequence_of({buy(1, 1, at("09:31:00.00")), buy(1, 1, at("09:32:00.00")), sell(2, 1, at("09:33:00.00"))}),
      sequence_of(std::vector<Entry>(5, buy(1, 1, at("09:31:00.00"))))};
  EXPECT_EQ(trading_frequency(seqs), 8);

  auto closed = build_activity_sequence("T1", "S1", std::vector<Entry>{buy(100, 10, at("09:31:00.00"))}, units(10),
                                        kEnd);
  std::vector<ActivitySequence> one{closed};
  EXPECT_EQ(trading_frequency(one), 2);
  LedgerOptions exclude;
  exclude.count_virtual = false;
  EXPECT_EQ(trading_frequency(one, exclude), 1);
}

TEST(HoldingTime, Examples) {
  auto d = [](int day) { return Timestamp{kDay0 + day, 10 * 360000}; };
  EXPECT_DOUBLE_EQ(holding_time_fifo(sequence_of({buy(100, 1, d(0)), sell(100, 1, d(10))})).mean_days(), 10.0);
  EXPECT_DOUBLE_EQ(
      holding_time_fifo(sequence_of({buy(100, 1, d(0)), buy(100, 1, d(2)), sell(200, 1, d(10))})).mean_days(), 9.0);
  EXPECT_DOUBLE_EQ(
      holding_time_fifo(sequence_of({buy(100, 1, d(0)), sell(50, 1, d(4)), sell(50, 1, d(8))})).mean_days(), 6.0);
  EXPECT_EQ(holding_time_fifo(sequence_of({})).mean_days(), 0.0);
}

TEST(HoldingTime, MatchesPerShareOracle) {
  SplitMix64 rng(43);
  for (int i = 0; i < 3000; ++i) {
    auto seq = build_activity_sequence("T1", "S1", random_entries(rng, 50, 1), units(10), kEnd);
    auto lots = holding_time_fifo(seq);
    auto shares = oracle::per_share_fifo(seq);
    ASSERT_EQ(lots.matched_shares, shares.matched_shares);
    ASSERT_TRUE(lots.share_centis == shares.share_centis);
  }
}

TEST(HoldingTime, ShortLotsInReorderedSequences) {
  // A replica can sell before buying; the buy then closes the short lot.
  auto seq = sequence_of({sell(100, 1, Timestamp{kDay0, 0}), buy(100, 1, Timestamp{kDay0 + 3, 0})});
  EXPECT_DOUBLE_EQ(holding_time_fifo(seq).mean_days(), 3.0);
}

TEST(Ledger, RunsFromFillsAndSkipsSelfTrades) {
  auto fill = [](std::string buyer, std::string seller, std::string bo, std::string so, double px, std::int64_t n,
                 Timestamp t, std::uint64_t seq) {
    Fill f;
    f.stock_id = "S1";
    f.price = units(px);
    f.size = n;
    f.time = t;
    f.sequence = seq;
    f.buyer = std::move(buyer);
    f.seller = std::move(seller);
    f.buy_order_id = std::move(bo);
    f.sell_order_id = std::move(so);
    return f;
  };
  std::vector<Fill> fills{fill("A", "B", "a1", "b1", 10.0, 100, at("09:31:00.00"), 0),
                          fill("A", "B", "a1", "b2", 10.3, 200, at("09:32:00.00"), 1),
                          fill("A", "A", "a2", "a3", 10.0, 100, at("09:33:00.00"), 2),
                          fill("B", "A", "b3", "a4", 11.0, 300, at("10:00:00.00"), 3)};
  StockTable stocks{{"S1", StockMeta{"S1", Market::A, units(10), units(11)}}};
  auto r = run_ledger(fills, stocks, kEnd, FeeSchedules{}, {});
  ASSERT_EQ(r.books.size(), 2u);
  const auto& a = r.books[0];
  EXPECT_EQ(a.investor_id, "A");
  ASSERT_EQ(a.sequences.size(), 1u);
  // Buy order a1 aggregates both fills; the self trade is gone.
  ASSERT_EQ(a.sequences[0].entries.size(), 2u);
  EXPECT_EQ(a.sequences[0].entries[0].volume, -300);
  EXPECT_EQ(a.sequences[0].entries[0].notional, units(3060));
  EXPECT_EQ(a.sequences[0].entries[1].volume, 300);
  bool flagged = false;
  for (const auto& d : r.diagnostics) flagged |= d.message.find("self") != std::string::npos;
  EXPECT_TRUE(flagged);
  // B sold 300 uncovered and then bought 300, closed out virtually at 11.
  ASSERT_EQ(r.performances.size(), 2u);
  EXPECT_EQ(r.performances[1].investor_id, "B");
  EXPECT_EQ(r.performances[1].J, 2);
  EXPECT_LT(r.performances[1].R, 0.0);  // flat price, fees only
  EXPECT_GT(r.performances[0].R, 0.0);

  auto again = run_ledger(fills, stocks, kEnd, FeeSchedules{}, {}, {}, {}, 4);
  std::ostringstream x, y;
  write_performance(x, r.performances);
  write_performance(y, again.performances);
  EXPECT_EQ(x.str(), y.str());
}
