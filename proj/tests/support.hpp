#pragma once

// Builders shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "stratscope/ledger.hpp"
#include "stratscope/orderflow.hpp"
#include "stratscope/rng.hpp"
#include "stratscope/types.hpp"

namespace stratscope::testing {

inline constexpr std::int32_t kDay0 = 12054;  // 2003-01-02, a Thursday

inline Money units(double v) { return Money::from_mils(static_cast<std::int64_t>(v * 1000.0 + (v >= 0 ? 0.5 : -0.5))); }

inline Timestamp at(std::int32_t day, std::string_view hhmmss) { return Timestamp{day, parse_time_of_day(hhmmss)}; }
inline Timestamp at(std::string_view hhmmss) { return at(kDay0, hhmmss); }

inline OrderEvent limit_order(std::string id, std::string trader, Side side, double price, std::int64_t size,
                              Timestamp t, std::string stock = "S1") {
  OrderEvent ev;
  ev.trader_id = std::move(trader);
  ev.stock_id = std::move(stock);
  ev.side = side;
  ev.kind = OrderKind::limit;
  ev.price = units(price);
  ev.size = size;
  ev.timestamp = t;
  ev.order_id = std::move(id);
  return ev;
}

inline OrderEvent market_order(std::string id, std::string trader, Side side, std::int64_t size, Timestamp t,
                               std::string stock = "S1") {
  OrderEvent ev = limit_order(std::move(id), std::move(trader), side, 0.0, size, t, std::move(stock));
  ev.kind = OrderKind::market;
  ev.price.reset();
  return ev;
}

inline OrderEvent cancel_order(std::string id, std::string trader, std::string target, Timestamp t,
                               std::string stock = "S1") {
  OrderEvent ev;
  ev.trader_id = std::move(trader);
  ev.stock_id = std::move(stock);
  ev.kind = OrderKind::cancel;
  ev.cancel_target = std::move(target);
  ev.timestamp = t;
  ev.order_id = std::move(id);
  return ev;
}

// Entry with sign convention: positive sells.
inline Entry entry(std::int64_t volume, double price, Timestamp t, std::uint64_t seq = 0) {
  Entry e;
  e.volume = volume;
  e.notional = units(price) * (volume < 0 ? -volume : volume);
  e.time = t;
  e.sequence = seq;
  return e;
}
inline Entry buy(std::int64_t shares, double price, Timestamp t, std::uint64_t seq = 0) {
  return entry(-shares, price, t, seq);
}
inline Entry sell(std::int64_t shares, double price, Timestamp t, std::uint64_t seq = 0) {
  return entry(shares, price, t, seq);
}

inline ActivitySequence sequence_of(std::vector<Entry> entries, std::string stock = "S1") {
  return ActivitySequence{"T1", std::move(stock), std::move(entries)};
}

// Random raw entries, time ordered, mixing buys and (often uncovered) sells.
inline std::vector<Entry> random_entries(SplitMix64& rng, std::size_t max_entries, std::int64_t lot = 100,
                                         std::int32_t days = 20) {
  std::size_t n = 1 + uniform_below(rng, max_entries);
  std::vector<std::int64_t> stamps;
  for (std::size_t i = 0; i < n; ++i)
    stamps.push_back(static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(days) * 400)));
  std::sort(stamps.begin(), stamps.end());
  std::vector<Entry> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t lots = 1 + static_cast<std::int64_t>(uniform_below(rng, 10));
    bool is_sell = uniform01(rng) < 0.45;
    Timestamp t{kDay0 + static_cast<std::int32_t>(stamps[i] / 400),
                static_cast<std::int32_t>(9 * 360000 + 30 * 6000 + (stamps[i] % 400) * 1500)};
    Entry e;
    e.volume = is_sell ? lots * lot : -lots * lot;
    e.notional = Money::from_cents(500 + static_cast<std::int64_t>(uniform_below(rng, 2000))) * (lots * lot);
    e.time = t;
    e.sequence = i;
    out.push_back(e);
  }
  return out;
}

}  // namespace stratscope::testing
