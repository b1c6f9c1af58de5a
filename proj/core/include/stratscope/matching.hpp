#pragma once

// Price-time-priority limit order book with an opening call auction. Replaying
// order flow through it reconstructs the fill stream the ledger consumes.

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stratscope/orderflow.hpp"
#include "stratscope/types.hpp"

namespace stratscope {

struct Fill {
  std::string stock_id;
  Price price;
  std::int64_t size = 0;
  Timestamp time;
  std::uint64_t sequence = 0;  // per stock, strictly increasing across a replay
  std::string buy_order_id;
  std::string sell_order_id;
  std::string buyer;
  std::string seller;
  InvestorClass buyer_class = InvestorClass::individual;
  InvestorClass seller_class = InvestorClass::individual;
  Side maker_side = Side::sell;
  bool call_auction = false;

  bool self_trade() const { return buyer == seller; }
  friend bool operator==(const Fill&, const Fill&) = default;
};

struct RestingOrder {
  std::string order_id;
  std::string trader_id;
  InvestorClass investor_class = InvestorClass::individual;
  std::int64_t remaining = 0;
  std::uint64_t arrival = 0;
};

class OrderBook {
 public:
  explicit OrderBook(std::string stock_id);

  const std::string& stock_id() const { return stock_id_; }

  // Continuous-phase handling of one event. Fills carry `fill_time`.
  // Cancels of unknown orders and market orders meeting an empty book are
  // reported to `diagnostics` and produce nothing.
  std::vector<Fill> submit(const OrderEvent& ev, Timestamp fill_time, Diagnostics* diagnostics = nullptr);
  std::vector<Fill> submit(const OrderEvent& ev, Diagnostics* diagnostics = nullptr) {
    return submit(ev, ev.timestamp, diagnostics);
  }

  std::optional<Price> best_bid() const;
  std::optional<Price> best_ask() const;
  std::optional<Price> last_price() const { return last_price_; }
  std::int64_t depth_at(Side side, Price price) const;
  std::size_t resting_orders() const { return index_.size(); }
  bool contains(const std::string& order_id) const { return index_.contains(order_id); }
  // Front-to-back resting orders of one level (empty when the level is absent).
  std::vector<RestingOrder> level(Side side, Price price) const;

  // Drops every resting order (end of day). Fill numbering and last price persist.
  void clear();

  std::uint64_t next_fill_sequence() { return fill_sequence_++; }
  void record_trade(Price p) { last_price_ = p; }

 private:
  using Level = std::deque<RestingOrder>;
  void rest(const OrderEvent& ev, std::int64_t remaining);
  bool cancel(const std::string& order_id);

  std::string stock_id_;
  std::map<Price, Level, std::greater<>> bids_;
  std::map<Price, Level, std::less<>> asks_;
  std::unordered_map<std::string, std::pair<Side, Price>> index_;
  std::optional<Price> last_price_;
  std::uint64_t arrival_ = 0;
  std::uint64_t fill_sequence_ = 0;
};

struct ClearingChoice {
  Price price;
  std::int64_t volume = 0;
  std::int64_t imbalance = 0;
  friend bool operator==(const ClearingChoice&, const ClearingChoice&) = default;
};

// Buy/sell volume executable at `price`: market orders count on either side at any price.
std::int64_t executable_volume(std::span<const OrderEvent> orders, Price price);

// Candidate prices are the submitted limit prices (previous close when none).
// Maximises executable volume, then minimises imbalance, then distance to the
// previous close, then prefers the lower price. nullopt when nothing crosses.
std::optional<ClearingChoice> choose_clearing_price(std::span<const OrderEvent> orders, Price previous_close);

struct AuctionResult {
  std::optional<Price> price;
  std::int64_t volume = 0;
  std::vector<Fill> fills;
  // Unexecuted limit remainders in arrival order, with reduced sizes. Market
  // order remainders are cancelled.
  std::vector<OrderEvent> residual;
  std::size_t cancelled_market_orders = 0;
};

// Orders are the call-phase limit/market orders in arrival order.
AuctionResult clear_call_auction(std::span<const OrderEvent> orders, Price previous_close, Timestamp clear_time,
                                 OrderBook& book);

// Drives one stock through one trading day: collects call-phase orders,
// clears them at the call close, queues cooling-phase orders until the
// continuous open, then streams continuous orders through the book.
class DayReplayer {
 public:
  DayReplayer(OrderBook& book, const SessionTimes& sessions, std::int32_t day, Price previous_close);

  // Events must arrive in non-decreasing time order and belong to this stock and day.
  void on_event(const OrderEvent& ev);
  // Runs any pending auction or cooling flush and clears the book.
  void finish();

  std::vector<Fill>& fills() { return fills_; }
  Diagnostics& diagnostics() { return diagnostics_; }

 private:
  void advance_to(std::int32_t centis);
  void run_auction();
  void flush_cooling();
  void emit(std::vector<Fill>&& fills);

  OrderBook& book_;
  SessionTimes sessions_;
  std::int32_t day_;
  Price previous_close_;
  std::vector<OrderEvent> call_orders_;
  std::vector<OrderEvent> cooling_orders_;
  bool auction_done_ = false;
  bool cooling_flushed_ = false;
  std::vector<Fill> fills_;
  Diagnostics diagnostics_;
};

struct ReplayResult {
  std::vector<Fill> fills;  // ordered by (time, stock_id, sequence)
  Diagnostics diagnostics;
  // Last traded price per stock per day, only for days with trades.
  std::map<std::string, std::map<std::int32_t, Price>> daily_close;
  // Auction clearing price per stock per day, when the auction traded.
  std::map<std::string, std::map<std::int32_t, Price>> opening_price;
};

// Replays a whole period. Each stock runs sequentially over its days while
// stocks run on up to `workers` threads; the result does not depend on `workers`.
// The previous close for day d is the last trade before d (or the stock table
// value before any trade).
ReplayResult replay(std::span<const OrderEvent> events, const TradingCalendar& cal, const StockTable& stocks,
                    std::size_t workers = 1);

// Single trading day; every event must fall on the same date.
ReplayResult replay_day(std::span<const OrderEvent> events, const TradingCalendar& cal, const StockTable& stocks);

// CSV `stock,price,size,time,buyer,seller,maker_side`.
void write_fills(std::ostream& out, std::span<const Fill> fills);

}  // namespace stratscope
