#include <benchmark/benchmark.h>

#include "stratscope/ledger.hpp"
#include "stratscope/rng.hpp"

using namespace stratscope;

namespace {

constexpr std::int32_t kDay = 12054;
const Timestamp kEnd{kDay + 30, 15 * 360000};

std::vector<Entry> random_entries(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Entry> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t shares = 100 * (1 + static_cast<std::int64_t>(uniform_below(rng, 10)));
    Entry e;
    e.volume = uniform01(rng) < 0.45 ? shares : -shares;
    e.notional = Money::from_cents(1000 + static_cast<std::int64_t>(uniform_below(rng, 200))) * shares;
    e.time = Timestamp{kDay + static_cast<std::int32_t>(i / 50), static_cast<std::int32_t>(10 * 360000 + (i % 50) * 100)};
    e.sequence = i;
    out.push_back(e);
  }
  return out;
}

void BM_BuildSequence(benchmark::State& state) {
  auto raw = random_entries(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_activity_sequence("T", "S", raw, Money::from_cents(1050), kEnd));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildSequence)->Arg(10)->Arg(1000);

void BM_StockEarnings(benchmark::State& state) {
  auto seq = build_activity_sequence("T", "S", random_entries(static_cast<std::size_t>(state.range(0)), 2),
                                     Money::from_cents(1050), kEnd);
  const auto fees = FeeSchedule::a_share();
  for (auto _ : state) benchmark::DoNotOptimize(stock_earnings(seq, fees, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StockEarnings)->Arg(10)->Arg(1000);

void BM_HoldingTime(benchmark::State& state) {
  auto seq = build_activity_sequence("T", "S", random_entries(static_cast<std::size_t>(state.range(0)), 3),
                                     Money::from_cents(1050), kEnd);
  for (auto _ : state) benchmark::DoNotOptimize(holding_time_fifo(seq));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HoldingTime)->Arg(10)->Arg(1000);

void BM_TransactionCost(benchmark::State& state) {
  const auto fees = FeeSchedule::a_share();
  std::int64_t cents = 100000;
  for (auto _ : state) {
    benchmark::DoNotOptimize(transaction_cost(Money::from_cents(cents), Side::sell, fees));
    cents = cents * 7 % 99991 + 1000;
  }
}
BENCHMARK(BM_TransactionCost);

}  // namespace

BENCHMARK_MAIN();
