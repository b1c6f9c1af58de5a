#include "stratscope/matching.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "stratscope/parallel.hpp"

namespace stratscope {

namespace {

constexpr std::string_view kSource = "matching";

Fill make_fill(OrderBook& book, Price price, std::int64_t size, Timestamp time, const OrderEvent& taker,
               const RestingOrder& maker, Side maker_side) {
  Fill f;
  f.stock_id = book.stock_id();
  f.price = price;
  f.size = size;
  f.time = time;
  f.sequence = book.next_fill_sequence();
  f.maker_side = maker_side;
  if (maker_side == Side::sell) {
    f.buy_order_id = taker.order_id;
    f.buyer = taker.trader_id;
    f.buyer_class = taker.investor_class;
    f.sell_order_id = maker.order_id;
    f.seller = maker.trader_id;
    f.seller_class = maker.investor_class;
  } else {
    f.sell_order_id = taker.order_id;
    f.seller = taker.trader_id;
    f.seller_class = taker.investor_class;
    f.buy_order_id = maker.order_id;
    f.buyer = maker.trader_id;
    f.buyer_class = maker.investor_class;
  }
  book.record_trade(price);
  return f;
}

template <class Levels>
void consume(Levels& levels, std::unordered_map<std::string, std::pair<Side, Price>>& index, OrderBook& book,
             const OrderEvent& taker, std::int64_t& remaining, Timestamp time, Side maker_side,
             std::vector<Fill>& out) {
  while (remaining > 0 && !levels.empty()) {
    auto it = levels.begin();
    if (taker.kind == OrderKind::limit) {
      bool marketable = taker.side == Side::buy ? it->first <= *taker.price : it->first >= *taker.price;
      if (!marketable) break;
    }
    auto& queue = it->second;
    while (remaining > 0 && !queue.empty()) {
      auto& maker = queue.front();
      auto qty = std::min(remaining, maker.remaining);
      out.push_back(make_fill(book, it->first, qty, time, taker, maker, maker_side));
      remaining -= qty;
      maker.remaining -= qty;
      if (maker.remaining == 0) {
        index.erase(maker.order_id);
        queue.pop_front();
      }
    }
    if (queue.empty()) levels.erase(it);
  }
}

}  // namespace

OrderBook::OrderBook(std::string stock_id) : stock_id_(std::move(stock_id)) {}

std::vector<Fill> OrderBook::submit(const OrderEvent& ev, Timestamp fill_time, Diagnostics* diagnostics) {
  std::vector<Fill> fills;
  if (ev.kind == OrderKind::cancel) {
    if (!cancel(ev.cancel_target) && diagnostics)
      diagnostics->push_back({Severity::warning, std::string(kSource), 0,
                              fmt::format("{} {}: cancel of unknown or filled order '{}'", stock_id_,
                                          format_timestamp(ev.timestamp), ev.cancel_target)});
    return fills;
  }
  if (index_.contains(ev.order_id))
    throw std::invalid_argument(fmt::format("order '{}' already resting in {}", ev.order_id, stock_id_));

  std::int64_t remaining = ev.size;
  if (ev.kind == OrderKind::market) {
    bool empty = ev.side == Side::buy ? asks_.empty() : bids_.empty();
    if (empty) {
      if (diagnostics)
        diagnostics->push_back({Severity::warning, std::string(kSource), 0,
                                fmt::format("{} {}: market order '{}' rejected against an empty book", stock_id_,
                                            format_timestamp(ev.timestamp), ev.order_id)});
      return fills;
    }
  }
  if (ev.side == Side::buy)
    consume(asks_, index_, *this, ev, remaining, fill_time, Side::sell, fills);
  else
    consume(bids_, index_, *this, ev, remaining, fill_time, Side::buy, fills);

  if (remaining > 0 && ev.kind == OrderKind::limit) rest(ev, remaining);
  return fills;
}

void OrderBook::rest(const OrderEvent& ev, std::int64_t remaining) {
  RestingOrder r{ev.order_id, ev.trader_id, ev.investor_class, remaining, arrival_++};
  if (ev.side == Side::buy)
    bids_[*ev.price].push_back(std::move(r));
  else
    asks_[*ev.price].push_back(std::move(r));
  index_.emplace(ev.order_id, std::make_pair(ev.side, *ev.price));
}

bool OrderBook::cancel(const std::string& order_id) {
  auto it = index_.find(order_id);
  if (it == index_.end()) return false;
  auto [side, price] = it->second;
  auto drop = [&](auto& levels) {
    auto lv = levels.find(price);
    auto& queue = lv->second;
    queue.erase(std::find_if(queue.begin(), queue.end(), [&](const RestingOrder& r) { return r.order_id == order_id; }));
    if (queue.empty()) levels.erase(lv);
  };
  if (side == Side::buy)
    drop(bids_);
  else
    drop(asks_);
  index_.erase(it);
  return true;
}

std::optional<Price> OrderBook::best_bid() const {
  if (bids_.empty()) return std::nullopt;
  return bids_.begin()->first;
}

std::optional<Price> OrderBook::best_ask() const {
  if (asks_.empty()) return std::nullopt;
  return asks_.begin()->first;
}

std::int64_t OrderBook::depth_at(Side side, Price price) const {
  auto sum = [](const Level& q) {
    std::int64_t s = 0;
    for (const auto& r : q) s += r.remaining;
    return s;
  };
  if (side == Side::buy) {
    auto it = bids_.find(price);
    return it == bids_.end() ? 0 : sum(it->second);
  }
  auto it = asks_.find(price);
  return it == asks_.end() ? 0 : sum(it->second);
}

std::vector<RestingOrder> OrderBook::level(Side side, Price price) const {
  if (side == Side::buy) {
    auto it = bids_.find(price);
    return it == bids_.end() ? std::vector<RestingOrder>{} : std::vector<RestingOrder>(it->second.begin(), it->second.end());
  }
  auto it = asks_.find(price);
  return it == asks_.end() ? std::vector<RestingOrder>{} : std::vector<RestingOrder>(it->second.begin(), it->second.end());
}

void OrderBook::clear() {
  bids_.clear();
  asks_.clear();
  index_.clear();
}

std::int64_t executable_volume(std::span<const OrderEvent> orders, Price price) {
  std::int64_t demand = 0, supply = 0;
  for (const auto& o : orders) {
    if (o.kind == OrderKind::cancel) continue;
    bool market = o.kind == OrderKind::market;
    if (o.side == Side::buy && (market || *o.price >= price)) demand += o.size;
    if (o.side == Side::sell && (market || *o.price <= price)) supply += o.size;
  }
  return std::min(demand, supply);
}

std::optional<ClearingChoice> choose_clearing_price(std::span<const OrderEvent> orders, Price previous_close) {
  std::set<Price> candidates;
  for (const auto& o : orders)
    if (o.kind == OrderKind::limit) candidates.insert(*o.price);
  if (candidates.empty()) candidates.insert(previous_close);

  // Cumulative demand at or above p, and supply at or below p, over the sorted candidates.
  std::vector<Price> prices(candidates.begin(), candidates.end());
  std::vector<std::int64_t> demand(prices.size(), 0), supply(prices.size(), 0);
  std::int64_t market_buy = 0, market_sell = 0;
  for (const auto& o : orders) {
    if (o.kind == OrderKind::market) {
      (o.side == Side::buy ? market_buy : market_sell) += o.size;
    } else if (o.kind == OrderKind::limit) {
      auto idx = static_cast<std::size_t>(std::lower_bound(prices.begin(), prices.end(), *o.price) - prices.begin());
      (o.side == Side::buy ? demand : supply)[idx] += o.size;
    }
  }
  for (std::size_t i = prices.size(); i-- > 1;) demand[i - 1] += demand[i];
  for (std::size_t i = 1; i < prices.size(); ++i) supply[i] += supply[i - 1];

  std::optional<ClearingChoice> best;
  std::int64_t best_distance = 0;
  for (std::size_t i = 0; i < prices.size(); ++i) {
    std::int64_t d = demand[i] + market_buy, s = supply[i] + market_sell;
    ClearingChoice c{prices[i], std::min(d, s), d > s ? d - s : s - d};
    if (c.volume <= 0) continue;
    std::int64_t distance = std::abs((c.price - previous_close).mils());
    // Ascending scan: on a full tie the earlier (lower) price stays.
    bool better = !best || c.volume > best->volume ||
                  (c.volume == best->volume &&
                   (c.imbalance < best->imbalance || (c.imbalance == best->imbalance && distance < best_distance)));
    if (better) {
      best = c;
      best_distance = distance;
    }
  }
  return best;
}

AuctionResult clear_call_auction(std::span<const OrderEvent> orders, Price previous_close, Timestamp clear_time,
                                 OrderBook& book) {
  AuctionResult result;
  auto choice = choose_clearing_price(orders, previous_close);

  struct Pending {
    const OrderEvent* ev;
    std::size_t arrival;
    std::int64_t remaining;
  };
  std::vector<Pending> buys, sells;
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const auto& o = orders[i];
    if (o.kind == OrderKind::cancel) continue;
    (o.side == Side::buy ? buys : sells).push_back({&o, i, o.size});
  }

  if (choice) {
    result.price = choice->price;
    result.volume = choice->volume;
    const Price p = choice->price;
    // Price priority (market first), then arrival.
    auto buy_before = [](const Pending& a, const Pending& b) {
      bool am = a.ev->kind == OrderKind::market, bm = b.ev->kind == OrderKind::market;
      if (am != bm) return am;
      if (!am && *a.ev->price != *b.ev->price) return *a.ev->price > *b.ev->price;
      return a.arrival < b.arrival;
    };
    auto sell_before = [](const Pending& a, const Pending& b) {
      bool am = a.ev->kind == OrderKind::market, bm = b.ev->kind == OrderKind::market;
      if (am != bm) return am;
      if (!am && *a.ev->price != *b.ev->price) return *a.ev->price < *b.ev->price;
      return a.arrival < b.arrival;
    };
    std::vector<Pending*> bq, sq;
    for (auto& b : buys)
      if (b.ev->kind == OrderKind::market || *b.ev->price >= p) bq.push_back(&b);
    for (auto& s : sells)
      if (s.ev->kind == OrderKind::market || *s.ev->price <= p) sq.push_back(&s);
    std::stable_sort(bq.begin(), bq.end(), [&](auto* a, auto* b) { return buy_before(*a, *b); });
    std::stable_sort(sq.begin(), sq.end(), [&](auto* a, auto* b) { return sell_before(*a, *b); });

    std::int64_t left = choice->volume;
    std::size_t bi = 0, si = 0;
    while (left > 0 && bi < bq.size() && si < sq.size()) {
      auto& b = *bq[bi];
      auto& s = *sq[si];
      auto qty = std::min({left, b.remaining, s.remaining});
      Fill f;
      f.stock_id = book.stock_id();
      f.price = p;
      f.size = qty;
      f.time = clear_time;
      f.sequence = book.next_fill_sequence();
      f.buy_order_id = b.ev->order_id;
      f.sell_order_id = s.ev->order_id;
      f.buyer = b.ev->trader_id;
      f.seller = s.ev->trader_id;
      f.buyer_class = b.ev->investor_class;
      f.seller_class = s.ev->investor_class;
      f.maker_side = b.arrival < s.arrival ? Side::buy : Side::sell;
      f.call_auction = true;
      result.fills.push_back(std::move(f));
      b.remaining -= qty;
      s.remaining -= qty;
      left -= qty;
      if (b.remaining == 0) ++bi;
      if (s.remaining == 0) ++si;
    }
    book.record_trade(p);
  }

  // Residuals in arrival order.
  std::vector<const Pending*> all;
  for (const auto& b : buys) all.push_back(&b);
  for (const auto& s : sells) all.push_back(&s);
  std::sort(all.begin(), all.end(), [](const Pending* a, const Pending* b) { return a->arrival < b->arrival; });
  for (const auto* r : all) {
    if (r->remaining == 0) continue;
    if (r->ev->kind == OrderKind::market) {
      ++result.cancelled_market_orders;
      continue;
    }
    OrderEvent rest = *r->ev;
    rest.size = r->remaining;
    result.residual.push_back(std::move(rest));
  }
  return result;
}

DayReplayer::DayReplayer(OrderBook& book, const SessionTimes& sessions, std::int32_t day, Price previous_close)
    : book_(book), sessions_(sessions), day_(day), previous_close_(previous_close) {}

void DayReplayer::emit(std::vector<Fill>&& fills) {
  for (auto& f : fills) fills_.push_back(std::move(f));
}

void DayReplayer::run_auction() {
  auction_done_ = true;
  Timestamp at{day_, sessions_.call_close};
  auto result = clear_call_auction(call_orders_, previous_close_, at, book_);
  emit(std::move(result.fills));
  if (result.cancelled_market_orders > 0)
    diagnostics_.push_back({Severity::warning, std::string(kSource), 0,
                            fmt::format("{} {}: {} call-auction market order remainder(s) cancelled", book_.stock_id(),
                                        format_date(day_), result.cancelled_market_orders)});
  // Residuals seed the continuous book in arrival order; submitting them
  // (rather than inserting) keeps the book uncrossed.
  for (const auto& r : result.residual) emit(book_.submit(r, at, &diagnostics_));
  call_orders_.clear();
}

void DayReplayer::flush_cooling() {
  cooling_flushed_ = true;
  Timestamp at{day_, sessions_.morning_open};
  for (const auto& ev : cooling_orders_) emit(book_.submit(ev, at, &diagnostics_));
  cooling_orders_.clear();
}

void DayReplayer::advance_to(std::int32_t centis) {
  if (!auction_done_ && centis >= sessions_.call_close) run_auction();
  if (!cooling_flushed_ && centis >= sessions_.morning_open) flush_cooling();
}

void DayReplayer::on_event(const OrderEvent& ev) {
  if (ev.timestamp.day != day_) throw std::invalid_argument("event outside the replayed day");
  advance_to(ev.timestamp.centis);
  switch (sessions_.phase_at(ev.timestamp.centis)) {
    case SessionPhase::call:
      if (ev.kind == OrderKind::cancel) {
        auto it = std::find_if(call_orders_.begin(), call_orders_.end(),
                               [&](const OrderEvent& o) { return o.order_id == ev.cancel_target; });
        if (it != call_orders_.end())
          call_orders_.erase(it);
        else
          diagnostics_.push_back({Severity::warning, std::string(kSource), 0,
                                  fmt::format("{} {}: cancel of unknown order '{}'", book_.stock_id(),
                                              format_timestamp(ev.timestamp), ev.cancel_target)});
      } else {
        call_orders_.push_back(ev);
      }
      break;
    case SessionPhase::cooling:
      cooling_orders_.push_back(ev);
      break;
    case SessionPhase::continuous:
      emit(book_.submit(ev, &diagnostics_));
      break;
    case SessionPhase::closed:
      diagnostics_.push_back({Severity::warning, std::string(kSource), 0,
                              fmt::format("{} {}: order '{}' outside trading sessions dropped", book_.stock_id(),
                                          format_timestamp(ev.timestamp), ev.order_id)});
      break;
  }
}

void DayReplayer::finish() {
  advance_to(kCentisPerDay);
  book_.clear();
}

namespace {

struct StockReplay {
  std::vector<Fill> fills;
  Diagnostics diagnostics;
  std::map<std::int32_t, Price> daily_close;
  std::map<std::int32_t, Price> opening_price;
};

StockReplay replay_stock(const std::string& stock_id, std::span<const OrderEvent* const> events,
                         const TradingCalendar& cal, const StockMeta& meta) {
  StockReplay out;
  OrderBook book(stock_id);
  Price previous_close = meta.previous_close;
  std::size_t i = 0;
  while (i < events.size()) {
    auto day = events[i]->timestamp.day;
    std::size_t end = i;
    while (end < events.size() && events[end]->timestamp.day == day) ++end;
    if (!cal.contains(day)) {
      out.diagnostics.push_back({Severity::error, std::string(kSource), 0,
                                 fmt::format("{}: {} order(s) on non-trading day {} dropped", stock_id, end - i,
                                             format_date(day))});
      i = end;
      continue;
    }
    DayReplayer replayer(book, cal.sessions(day), day, previous_close);
    for (std::size_t k = i; k < end; ++k) replayer.on_event(*events[k]);
    replayer.finish();
    for (auto& f : replayer.fills()) {
      if (f.call_auction && !out.opening_price.contains(day)) out.opening_price[day] = f.price;
      out.fills.push_back(std::move(f));
    }
    for (auto& d : replayer.diagnostics()) out.diagnostics.push_back(std::move(d));
    if (!out.fills.empty() && out.fills.back().time.day == day) {
      previous_close = out.fills.back().price;
      out.daily_close[day] = previous_close;
    }
    i = end;
  }
  return out;
}

}  // namespace

ReplayResult replay(std::span<const OrderEvent> events, const TradingCalendar& cal, const StockTable& stocks,
                    std::size_t workers) {
  ReplayResult result;
  std::map<std::string, std::vector<const OrderEvent*>> by_stock;
  for (const auto& ev : events) by_stock[ev.stock_id].push_back(&ev);

  std::vector<std::string> ids;
  for (auto& [id, evs] : by_stock) {
    if (!stocks.contains(id)) {
      result.diagnostics.push_back({Severity::error, std::string(kSource), 0,
                                    fmt::format("{}: no stock metadata; {} order(s) dropped", id, evs.size())});
      continue;
    }
    std::stable_sort(evs.begin(), evs.end(),
                     [](const OrderEvent* a, const OrderEvent* b) { return a->timestamp < b->timestamp; });
    ids.push_back(id);
  }

  std::vector<StockReplay> per_stock(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t k) {
    per_stock[k] = replay_stock(ids[k], by_stock.at(ids[k]), cal, stocks.at(ids[k]));
  });

  std::size_t total = 0;
  for (const auto& r : per_stock) total += r.fills.size();
  result.fills.reserve(total);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    for (auto& f : per_stock[k].fills) result.fills.push_back(std::move(f));
    for (auto& d : per_stock[k].diagnostics) result.diagnostics.push_back(std::move(d));
    if (!per_stock[k].daily_close.empty()) result.daily_close[ids[k]] = std::move(per_stock[k].daily_close);
    if (!per_stock[k].opening_price.empty()) result.opening_price[ids[k]] = std::move(per_stock[k].opening_price);
  }
  std::stable_sort(result.fills.begin(), result.fills.end(), [](const Fill& a, const Fill& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.stock_id != b.stock_id) return a.stock_id < b.stock_id;
    return a.sequence < b.sequence;
  });
  return result;
}

ReplayResult replay_day(std::span<const OrderEvent> events, const TradingCalendar& cal, const StockTable& stocks) {
  if (!events.empty()) {
    auto day = events.front().timestamp.day;
    for (const auto& ev : events)
      if (ev.timestamp.day != day) throw std::invalid_argument("replay_day: events span more than one day");
  }
  return replay(events, cal, stocks, 1);
}

void write_fills(std::ostream& out, std::span<const Fill> fills) {
  out << "stock,price,size,time,buyer,seller,maker_side\n";
  for (const auto& f : fills)
    out << f.stock_id << ',' << format_money(f.price) << ',' << f.size << ',' << format_timestamp(f.time) << ','
        << f.buyer << ',' << f.seller << ',' << to_string(f.maker_side) << '\n';
}

}  // namespace stratscope
