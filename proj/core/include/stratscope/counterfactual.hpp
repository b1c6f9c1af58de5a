#pragma once

// Random-timing benchmark: every investor's volumes and per-stock transaction
// counts stay fixed while execution times are redrawn from the stock's trade
// tape; the ledger is re-run on the repriced sequences.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stratscope/ledger.hpp"
#include "stratscope/matching.hpp"
#include "stratscope/rng.hpp"
#include "stratscope/spectro.hpp"

namespace stratscope {

struct TapePoint {
  Timestamp time;
  Price price;
};

struct TradeTape {
  std::string stock_id;
  std::vector<TapePoint> points;  // strictly increasing times
  Price period_end_price;

  // Price of the trade at exactly `t`; throws std::out_of_range if the tape has none.
  Price price_at(Timestamp t) const;
};

using TapeTable = std::map<std::string, TradeTape>;

// One tape point per distinct fill timestamp, carrying the last trade at that
// timestamp. Stocks without a close-out price in `period_end` are skipped.
TapeTable build_tapes(std::span<const Fill> fills, const std::map<std::string, Price>& period_end);

class InsufficientTape : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `count` distinct indices in [0, tape_size), uniform without replacement, ascending.
std::vector<std::size_t> sample_tape_indices(std::size_t count, std::size_t tape_size, SplitMix64& rng);

// `count` distinct tape timestamps, ascending. Throws InsufficientTape when
// the tape is shorter than `count`.
std::vector<Timestamp> sample_random_times(std::size_t count, const TradeTape& tape, SplitMix64& rng);

// Assigns `new_times` (ascending) to the non-virtual entries in their original
// order and reprices them from the tape; virtual close-outs keep their time
// and price. Volumes are untouched.
ActivitySequence reprice(const ActivitySequence& seq, std::span<const Timestamp> new_times, const TradeTape& tape);

struct ReplicaResult {
  std::uint32_t investor = 0;  // index into the evaluated books
  std::uint32_t replica = 0;
  double R = 0.0;
  std::int64_t J = 0;
  double dt_days = 0.0;
  Outcome label = Outcome::flat;
};

// Reprices every sequence of `book` at `new_times[k]` (one list per sequence)
// and re-runs the ledger.
ReplicaResult reprice_and_evaluate(const InvestorBook& book, std::span<const std::vector<Timestamp>> new_times,
                                   const TapeTable& tapes, const FeeSchedule& schedule, const DividendTable& dividends,
                                   const LedgerOptions& options = {});

struct CounterfactualSettings {
  std::size_t replicas = 2000;
  std::uint64_t seed = 20030101;
  // Resample until every prefix position is non-negative. Sorted times keep
  // the original entry order, so sanitized input always satisfies it.
  bool strict_position_mode = false;
  std::size_t workers = 1;
  LedgerOptions ledger;
};

// Replica `replica` of `book`. Randomness depends only on (seed, investor id,
// stock id, replica index).
ReplicaResult run_replica(const InvestorBook& book, std::uint32_t investor_index, std::uint32_t replica,
                          const TapeTable& tapes, const FeeSchedule& schedule, const DividendTable& dividends,
                          const CounterfactualSettings& settings);

struct MonteCarloResult {
  // replicas[i] holds the results for books[i]; empty when the investor was skipped.
  std::vector<std::vector<ReplicaResult>> replicas;
  Diagnostics diagnostics;

  std::vector<ReplicaResult> pooled() const;  // canonical (investor, replica) order
};

MonteCarloResult run_monte_carlo(std::span<const InvestorBook> books, const TapeTable& tapes, const FeeSchedules& fees,
                                 const DividendTable& dividends, const CounterfactualSettings& settings);

// Same computation without retaining every replica: `sink(i, results)` is
// called once per eligible investor, in index order, whatever `workers` is.
using ReplicaSink = std::function<void(std::size_t investor, std::span<const ReplicaResult> results)>;
Diagnostics run_monte_carlo_streaming(std::span<const InvestorBook> books, const TapeTable& tapes,
                                      const FeeSchedules& fees, const DividendTable& dividends,
                                      const CounterfactualSettings& settings, const ReplicaSink& sink);

// Incremental binning of replica results on the same grids as edges_for:
// ratio-spaced J edges from the first edge, and absolute 10^(k/per_decade)
// holding-time edges. Bins span the observed range; Welford accumulation in
// insertion order.
class ReplicaBinner {
 public:
  ReplicaBinner(BinKind kind, const BinSettings& settings);
  void add(const ReplicaResult& r);
  std::vector<BinnedSeries> finish() const;  // all, winner, loser

 private:
  struct Acc {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double sum_dt = 0.0;
    double sum_J = 0.0;
  };
  std::optional<long> index_of(const ReplicaResult& r) const;
  double edge(long k) const;

  BinKind kind_;
  BinSettings settings_;
  std::map<long, std::array<Acc, 3>> bins_;
};

// Mean/std of replica returns per bin over all, winner and loser replicas.
std::vector<BinnedSeries> summarize_replicas(std::span<const ReplicaResult> results, BinKind kind,
                                             std::span<const double> edges);

// CSV `bin_kind,bin_center,pool,mean_R,std_R,count`.
void write_replica_summary(std::ostream& out, std::span<const BinnedSeries> series);

}  // namespace stratscope
