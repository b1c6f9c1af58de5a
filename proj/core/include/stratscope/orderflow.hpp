#pragma once

// Canonical order-flow data model: order events, trading calendar, dividends,
// stock reference data, and their text formats.

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stratscope/types.hpp"

namespace stratscope {

struct OrderEvent {
  std::string trader_id;
  InvestorClass investor_class = InvestorClass::individual;
  std::string stock_id;
  Side side = Side::buy;
  OrderKind kind = OrderKind::limit;
  std::optional<Price> price;  // limit orders only
  std::int64_t size = 0;       // 0 for cancels
  std::string cancel_target;   // cancels only
  Timestamp timestamp;
  std::string order_id;

  friend bool operator==(const OrderEvent&, const OrderEvent&) = default;
};

// Column names resolved against the header row; extra columns are ignored.
struct OrderSchema {
  std::string trader_id = "trader_id";
  std::string investor_class = "class";
  std::string stock = "stock";
  std::string side = "side";
  std::string kind = "kind";
  std::string price = "price";
  std::string size = "size";
  std::string cancel_target = "cancel_target";
  std::string timestamp = "timestamp";
  std::string order_id = "order_id";
};

inline constexpr std::string_view kOrderHeader =
    "trader_id,class,stock,side,kind,price,size,cancel_target,timestamp,order_id";

struct OrderParseOptions {
  bool resort = false;
  // Lets rows carry a bare "HH:MM:SS.cc" time; otherwise the date part is required.
  std::optional<std::int32_t> default_date;
};

struct ParsedOrders {
  std::vector<OrderEvent> events;
  Diagnostics diagnostics;
};

// Record-level problems become diagnostics and the row is skipped. A missing
// required column, or out-of-order rows without `resort`, throw ParseError.
ParsedOrders parse_order_events(std::istream& in, const OrderSchema& schema = {},
                                const OrderParseOptions& options = {});
void write_order_events(std::ostream& out, std::span<const OrderEvent> events);

enum class SessionPhase : std::uint8_t { call, cooling, continuous, closed };
std::string_view to_string(SessionPhase p);

// Intraday phase boundaries in centiseconds since midnight. Each interval is
// half-open: a boundary instant belongs to the later phase.
struct SessionTimes {
  std::int32_t call_open = 9 * 360000 + 15 * 6000;
  std::int32_t call_close = 9 * 360000 + 25 * 6000;
  std::int32_t cooling_open = 9 * 360000 + 25 * 6000;
  std::int32_t cooling_close = 9 * 360000 + 30 * 6000;
  std::int32_t morning_open = 9 * 360000 + 30 * 6000;
  std::int32_t morning_close = 11 * 360000 + 30 * 6000;
  std::int32_t afternoon_open = 13 * 360000;
  std::int32_t afternoon_close = 15 * 360000;

  // Throws ConfigError unless call < cooling < morning < afternoon, all disjoint.
  void validate() const;
  SessionPhase phase_at(std::int32_t centis) const;

  friend bool operator==(const SessionTimes&, const SessionTimes&) = default;
};

class TradingCalendar {
 public:
  TradingCalendar() = default;
  explicit TradingCalendar(std::vector<std::int32_t> days);

  // Consecutive weekdays starting at `first_day` (inclusive, weekends skipped).
  static TradingCalendar weekdays(std::int32_t first_day, std::size_t count);

  void set_sessions(std::int32_t day, const SessionTimes& times);

  bool contains(std::int32_t day) const;
  const std::vector<std::int32_t>& days() const { return days_; }
  bool empty() const { return days_.empty(); }
  // Throws std::out_of_range("non-trading day ...") for a day outside the calendar.
  const SessionTimes& sessions(std::int32_t day) const;
  // Position of `day` in the calendar; throws for non-trading days.
  std::size_t index_of(std::int32_t day) const;
  // Afternoon close of the last trading day.
  Timestamp period_end() const;

 private:
  std::vector<std::int32_t> days_;
  std::map<std::int32_t, SessionTimes> overrides_;
  SessionTimes defaults_;
};

SessionPhase session_phase(Timestamp t, const TradingCalendar& cal);

// CSV with a `date` column and optional per-day overrides named after the
// SessionTimes fields (empty cells keep the default).
TradingCalendar load_calendar(std::istream& in);
void write_calendar(std::ostream& out, const TradingCalendar& cal);

struct DividendEvent {
  std::string stock_id;
  std::int32_t ex_date = 0;
  Money cash_per_share;

  friend bool operator==(const DividendEvent&, const DividendEvent&) = default;
};

struct ParsedDividends {
  std::vector<DividendEvent> events;  // sorted by (stock_id, ex_date)
  Diagnostics diagnostics;
};

// `known_stocks`, when given, turns unknown stock ids into warnings (row kept).
ParsedDividends load_dividends(std::istream& in, const std::set<std::string>* known_stocks = nullptr);
void write_dividends(std::ostream& out, std::span<const DividendEvent> events);

struct StockMeta {
  std::string stock_id;
  Market market = Market::A;
  Price previous_close;                 // close before the first day of the period
  std::optional<Price> period_end_price;  // virtual close-out price

  friend bool operator==(const StockMeta&, const StockMeta&) = default;
};

using StockTable = std::map<std::string, StockMeta>;

// CSV `stock,market,previous_close,period_end_price`; the last cell may be empty.
StockTable load_stock_meta(std::istream& in);
void write_stock_meta(std::ostream& out, const StockTable& stocks);

struct IndexPoint {
  std::int32_t day = 0;
  double level = 0.0;
};

// CSV `date,level`; an optional third column `market` (A/B) selects the segment.
struct IndexSeries {
  std::map<Market, std::vector<IndexPoint>> by_market;
};
IndexSeries load_index_series(std::istream& in);

}  // namespace stratscope
