#include <benchmark/benchmark.h>

#include "stratscope/counterfactual.hpp"
#include "stratscope/rng.hpp"

using namespace stratscope;

namespace {

constexpr std::int32_t kDay = 12054;
const Timestamp kEnd{kDay + 30, 15 * 360000};

TapeTable make_tapes(std::size_t points) {
  TapeTable tapes;
  SplitMix64 rng(5);
  TradeTape tape{"S1", {}, Money::from_cents(1000)};
  for (std::size_t k = 0; k < points; ++k)
    tape.points.push_back({Timestamp{kDay + static_cast<std::int32_t>(k / 1000), static_cast<std::int32_t>(10 * 360000 + (k % 1000) * 100)},
                           Money::from_cents(950 + static_cast<std::int64_t>(uniform_below(rng, 100)))});
  tapes.emplace("S1", std::move(tape));
  return tapes;
}

std::vector<InvestorBook> make_books(std::size_t investors, std::size_t trips) {
  std::vector<InvestorBook> books;
  for (std::size_t i = 0; i < investors; ++i) {
    std::vector<Entry> raw;
    for (std::size_t k = 0; k < trips; ++k)
      for (int leg = 0; leg < 2; ++leg) {
        Entry e;
        e.volume = leg == 0 ? -100 : 100;
        e.notional = Money::from_cents(1000) * 100;
        e.time = Timestamp{kDay, static_cast<std::int32_t>(10 * 360000 + (2 * k + leg) * 100)};
        e.sequence = 2 * k + leg;
        raw.push_back(e);
      }
    InvestorBook b;
    b.investor_id = "I" + std::to_string(i);
    b.sequences.push_back(build_activity_sequence(b.investor_id, "S1", raw, Money::from_cents(1000), kEnd));
    books.push_back(std::move(b));
  }
  return books;
}

void BM_SampleTimes(benchmark::State& state) {
  auto tapes = make_tapes(20000);
  SplitMix64 rng(1);
  const auto count = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample_random_times(count, tapes.at("S1"), rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleTimes)->Arg(2)->Arg(50)->Arg(1000);

void BM_MonteCarlo(benchmark::State& state) {
  auto tapes = make_tapes(20000);
  auto books = make_books(static_cast<std::size_t>(state.range(0)), 5);
  CounterfactualSettings s;
  s.replicas = 200;
  const FeeSchedules fees;
  for (auto _ : state) {
    std::size_t seen = 0;
    run_monte_carlo_streaming(books, tapes, fees, {}, s,
                              [&](std::size_t, std::span<const ReplicaResult> r) { seen += r.size(); });
    benchmark::DoNotOptimize(seen);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 200);
}
BENCHMARK(BM_MonteCarlo)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
