#include <benchmark/benchmark.h>

#include "stratscope/matching.hpp"
#include "stratscope/rng.hpp"

using namespace stratscope;

namespace {

constexpr std::int32_t kDay = 12054;

std::vector<OrderEvent> random_flow(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<OrderEvent> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    OrderEvent ev;
    ev.trader_id = "T" + std::to_string(uniform_below(rng, 500));
    ev.stock_id = "S1";
    ev.side = uniform01(rng) < 0.5 ? Side::buy : Side::sell;
    ev.size = 100 * (1 + static_cast<std::int64_t>(uniform_below(rng, 10)));
    ev.kind = uniform01(rng) < 0.05 ? OrderKind::market : OrderKind::limit;
    if (ev.kind == OrderKind::limit) ev.price = Money::from_cents(1000 + static_cast<std::int64_t>(uniform_below(rng, 40)) - 20);
    ev.timestamp = Timestamp{kDay, static_cast<std::int32_t>(9 * 360000 + 30 * 6000 + i)};
    ev.order_id = "O" + std::to_string(i);
    out.push_back(std::move(ev));
  }
  return out;
}

void BM_ContinuousBook(benchmark::State& state) {
  auto flow = random_flow(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    OrderBook book("S1");
    std::size_t fills = 0;
    for (const auto& ev : flow) fills += book.submit(ev).size();
    benchmark::DoNotOptimize(fills);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ContinuousBook)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_ClearingPrice(benchmark::State& state) {
  auto orders = random_flow(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(choose_clearing_price(orders, Money::from_cents(1000)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ClearingPrice)->Arg(20)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
