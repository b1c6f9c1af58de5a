#pragma once

// Per-investor accounting: activity sequences built from fills, exact
// transaction costs, earnings, portfolio return, trading frequency and FIFO
// holding time.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratscope/matching.hpp"
#include "stratscope/orderflow.hpp"
#include "stratscope/types.hpp"

namespace stratscope {

// One aggregated transaction. Volume is signed: positive sells, negative buys.
// `notional` is |p v| held exactly; the volume-weighted price is derived from it.
struct Entry {
  std::int64_t volume = 0;
  Money notional;
  Timestamp time;
  std::uint64_t sequence = 0;
  bool virtual_close = false;

  Side side() const { return volume > 0 ? Side::sell : Side::buy; }
  std::int64_t shares() const { return volume < 0 ? -volume : volume; }
  double price() const { return notional.to_double() / static_cast<double>(shares()); }

  friend bool operator==(const Entry&, const Entry&) = default;
};

struct ActivitySequence {
  std::string investor_id;
  std::string stock_id;
  std::vector<Entry> entries;

  std::size_t size() const { return entries.size(); }
  std::int64_t net_volume() const;
};

struct FillLeg {
  std::int64_t size = 0;
  Price price;
  Timestamp time;
  std::uint64_t sequence = 0;
};

// Collapses the fills of one order into a single entry: executed size signed
// by side, volume-weighted price, last fill time. nullopt for no fills.
// Throws std::invalid_argument when `order_size` > 0 and the fills exceed it.
std::optional<Entry> aggregate_fills_to_entry(std::span<const FillLeg> legs, Side side, std::int64_t order_size = 0);

class LedgerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Floors the running position at zero (uncovered sells truncated or dropped)
// and appends a virtual close-out of any remaining holdings at `period_end`.
// Throws LedgerError("cannot close out") if holdings remain without a price.
ActivitySequence build_activity_sequence(std::string investor_id, std::string stock_id, std::span<const Entry> entries,
                                         std::optional<Price> period_end_price, Timestamp period_end);

struct FeeSchedule {
  Rate brokerage{150000};
  std::optional<Rate> brokerage_individual;
  std::optional<Rate> brokerage_institution;
  Rate exchange{14750};
  Rate supervision{4000};
  Rate stamp_duty{100000};  // sell side only
  Money minimum_fee = Money::from_units(5);

  static FeeSchedule a_share();
  static FeeSchedule b_share();
  static FeeSchedule zero();

  Rate brokerage_for(InvestorClass cls) const;
  // Brokerage + exchange + supervision for the class.
  Rate proportional(InvestorClass cls) const { return brokerage_for(cls) + exchange + supervision; }
  // Throws ConfigError for negative rates or brokerage+exchange+supervision > 0.3%.
  void validate() const;
};

inline constexpr Rate kMaxProportionalRate{300000};

// max(|pv|(b+e+f), minimum) + |pv| d for sells, rounded half-up to the cent.
Money transaction_cost(Money notional, Side side, const FeeSchedule& schedule,
                       InvestorClass cls = InvestorClass::individual);

struct LedgerOptions {
  bool virtual_close_costs = true;
  bool count_virtual = true;
};

using DividendTable = std::map<std::string, std::vector<DividendEvent>>;
DividendTable make_dividend_table(std::span<const DividendEvent> events);

struct StockEarnings {
  Money buy_capital;
  Money sell_proceeds;
  Money buy_cost;
  Money sell_cost;
  Money dividends;

  Money total_cost() const { return buy_cost + sell_cost; }
  Money earnings() const { return sell_proceeds - buy_capital - total_cost() + dividends; }
  friend bool operator==(const StockEarnings&, const StockEarnings&) = default;
};

// Dividends accrue on holdings at the ex-date open, i.e. net position from
// entries on earlier days. `dividends` are the events of this stock.
StockEarnings stock_earnings(const ActivitySequence& seq, const FeeSchedule& schedule,
                             std::span<const DividendEvent> dividends, InvestorClass cls = InvestorClass::individual,
                             const LedgerOptions& options = {});

// Sum of earnings over (buy capital + buy costs). nullopt when the denominator is zero.
std::optional<double> portfolio_return(std::span<const StockEarnings> per_stock);

std::int64_t trading_frequency(std::span<const ActivitySequence> sequences, const LedgerOptions& options = {});

struct HoldingTime {
  struct RoundTrip {
    std::int64_t shares = 0;
    std::int64_t centis = 0;
  };
  std::vector<RoundTrip> trips;
  std::int64_t matched_shares = 0;
  Int128 share_centis = 0;  // sum of shares x duration

  void merge(const HoldingTime& other);
  // Share-weighted mean duration in days (0 when nothing matched).
  double mean_days() const;
};

// FIFO lot matching. Sells close the oldest open long lots; in sequences that
// go short (counterfactual replicas) buys close the oldest short lots the same way.
HoldingTime holding_time_fifo(const ActivitySequence& seq);

enum class Outcome : std::uint8_t { winner, loser, flat };
std::string_view to_string(Outcome o);
constexpr Outcome outcome_of(double r) { return r > 0 ? Outcome::winner : (r < 0 ? Outcome::loser : Outcome::flat); }

struct InvestorPerformance {
  std::string investor_id;
  InvestorClass investor_class = InvestorClass::individual;
  Market market = Market::A;
  double R = 0.0;
  std::int64_t J = 0;
  double dt_days = 0.0;
  Outcome label = Outcome::flat;
};

// All activity of one investor within one market segment, one sequence per stock.
struct InvestorBook {
  std::string investor_id;
  InvestorClass investor_class = InvestorClass::individual;
  Market market = Market::A;
  std::vector<ActivitySequence> sequences;  // sorted by stock id, none empty
};

struct InvestorEvaluation {
  std::vector<StockEarnings> per_stock;
  std::optional<double> R;
  std::int64_t J = 0;
  HoldingTime holding;
};

InvestorEvaluation evaluate_investor(const InvestorBook& book, const FeeSchedule& schedule,
                                     const DividendTable& dividends, const LedgerOptions& options = {});

struct FeeSchedules {
  FeeSchedule a = FeeSchedule::a_share();
  FeeSchedule b = FeeSchedule::b_share();
  const FeeSchedule& for_market(Market m) const { return m == Market::A ? a : b; }
};

struct LedgerResult {
  std::vector<InvestorBook> books;                // sorted by (market, investor id)
  std::vector<InvestorPerformance> performances;  // parallel to `books`, minus excluded investors
  std::vector<std::size_t> book_of;               // performances[i] came from books[book_of[i]]
  Diagnostics diagnostics;
};

// Fills -> per-order entries -> sanitized sequences -> performance. Self-trade
// fills net to nothing and are skipped. A stock's close-out price is its
// period_end_price, falling back to `fallback_close` (e.g. last trade).
LedgerResult run_ledger(std::span<const Fill> fills, const StockTable& stocks, Timestamp period_end,
                        const FeeSchedules& fees, const DividendTable& dividends, const LedgerOptions& options = {},
                        const std::map<std::string, Price>& fallback_close = {}, std::size_t workers = 1);

// CSV `investor,class,market,R,J,dt_days,label`.
void write_performance(std::ostream& out, std::span<const InvestorPerformance> performances);

}  // namespace stratscope
