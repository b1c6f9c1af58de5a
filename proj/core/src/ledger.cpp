#include "stratscope/ledger.hpp"

#include <algorithm>
#include <deque>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <fmt/format.h>

#include "stratscope/parallel.hpp"

namespace stratscope {

namespace {
constexpr std::string_view kSource = "ledger";

bool entry_before(const Entry& a, const Entry& b) {
  return a.time != b.time ? a.time < b.time : a.sequence < b.sequence;
}
}  // namespace

std::int64_t ActivitySequence::net_volume() const {
  std::int64_t s = 0;
  for (const auto& e : entries) s += e.volume;
  return s;
}

std::optional<Entry> aggregate_fills_to_entry(std::span<const FillLeg> legs, Side side, std::int64_t order_size) {
  if (legs.empty()) return std::nullopt;
  Entry e;
  std::int64_t executed = 0;
  const FillLeg* last = &legs.front();
  for (const auto& leg : legs) {
    if (leg.size <= 0) throw std::invalid_argument("fill with non-positive size");
    executed += leg.size;
    e.notional += leg.price * leg.size;
    if (leg.time > last->time || (leg.time == last->time && leg.sequence > last->sequence)) last = &leg;
  }
  if (order_size > 0 && executed > order_size) throw std::invalid_argument("fills exceed the order size");
  e.volume = side == Side::sell ? executed : -executed;
  e.time = last->time;
  e.sequence = last->sequence;
  return e;
}

ActivitySequence build_activity_sequence(std::string investor_id, std::string stock_id, std::span<const Entry> entries,
                                         std::optional<Price> period_end_price, Timestamp period_end) {
  ActivitySequence seq{std::move(investor_id), std::move(stock_id), {}};
  std::int64_t held = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.volume == 0) throw std::invalid_argument("entry with zero volume");
    if (i > 0 && entry_before(e, entries[i - 1])) throw std::invalid_argument("entries not in time order");
    if (e.volume < 0) {
      held += -e.volume;
      seq.entries.push_back(e);
      continue;
    }
    if (held == 0) continue;  // uncovered sell
    if (e.volume <= held) {
      held -= e.volume;
      seq.entries.push_back(e);
      continue;
    }
    // Oversized sell: keep the covered part at the same average price.
    Entry kept = e;
    Int128 num = static_cast<Int128>(e.notional.mils()) * held * 2 + e.volume;
    kept.notional = Money::from_mils(static_cast<std::int64_t>(num / (2 * static_cast<Int128>(e.volume))));
    kept.volume = held;
    held = 0;
    seq.entries.push_back(kept);
  }
  if (held > 0) {
    if (!period_end_price)
      throw LedgerError(fmt::format("cannot close out {} shares of {} for {}: no period-end price", held, seq.stock_id,
                                    seq.investor_id));
    Entry close;
    close.volume = held;
    close.notional = *period_end_price * held;
    close.time = period_end;
    close.sequence = seq.entries.empty() ? 0 : seq.entries.back().sequence + 1;
    close.virtual_close = true;
    seq.entries.push_back(close);
  }
  return seq;
}

FeeSchedule FeeSchedule::a_share() { return FeeSchedule{}; }

FeeSchedule FeeSchedule::b_share() {
  FeeSchedule s;
  s.exchange = Rate{30100};
  return s;
}

FeeSchedule FeeSchedule::zero() {
  FeeSchedule s;
  s.brokerage = s.exchange = s.supervision = s.stamp_duty = Rate{0};
  s.minimum_fee = Money{};
  return s;
}

Rate FeeSchedule::brokerage_for(InvestorClass cls) const {
  if (cls == InvestorClass::individual && brokerage_individual) return *brokerage_individual;
  if (cls == InvestorClass::institution && brokerage_institution) return *brokerage_institution;
  return brokerage;
}

void FeeSchedule::validate() const {
  for (Rate r : {brokerage, exchange, supervision, stamp_duty})
    if (r.per_1e8 < 0) throw ConfigError("negative fee rate");
  if (minimum_fee < Money{}) throw ConfigError("negative minimum fee");
  for (auto cls : {InvestorClass::individual, InvestorClass::institution}) {
    if (brokerage_for(cls).per_1e8 < 0) throw ConfigError("negative brokerage rate");
    if (proportional(cls) > kMaxProportionalRate)
      throw ConfigError(fmt::format("brokerage + exchange + supervision = {} exceeds 0.3% for {}",
                                    format_rate(proportional(cls)), to_string(cls)));
  }
}

Money transaction_cost(Money notional, Side side, const FeeSchedule& schedule, InvestorClass cls) {
  if (notional <= Money{}) throw std::invalid_argument("transaction_cost: notional must be positive");
  const Int128 n = notional.mils();
  Int128 proportional = n * schedule.proportional(cls).per_1e8;
  Int128 floor = static_cast<Int128>(schedule.minimum_fee.mils()) * 100000000;
  Int128 total = std::max(proportional, floor);
  if (side == Side::sell) total += n * schedule.stamp_duty.per_1e8;
  return round_half_up_to_cents(total);
}

DividendTable make_dividend_table(std::span<const DividendEvent> events) {
  DividendTable t;
  for (const auto& ev : events) t[ev.stock_id].push_back(ev);
  for (auto& [id, evs] : t)
    std::sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) { return a.ex_date < b.ex_date; });
  return t;
}

StockEarnings stock_earnings(const ActivitySequence& seq, const FeeSchedule& schedule,
                             std::span<const DividendEvent> dividends, InvestorClass cls,
                             const LedgerOptions& options) {
  StockEarnings out;
  for (const auto& e : seq.entries) {
    bool charge = !e.virtual_close || options.virtual_close_costs;
    Money cost = charge ? transaction_cost(e.notional, e.side(), schedule, cls) : Money{};
    if (e.volume < 0) {
      out.buy_capital += e.notional;
      out.buy_cost += cost;
    } else {
      out.sell_proceeds += e.notional;
      out.sell_cost += cost;
    }
  }
  for (const auto& d : dividends) {
    std::int64_t held = 0;
    for (const auto& e : seq.entries) {
      if (e.time.day >= d.ex_date) break;
      held -= e.volume;
    }
    out.dividends += d.cash_per_share * held;
  }
  return out;
}

std::optional<double> portfolio_return(std::span<const StockEarnings> per_stock) {
  Money earnings, invested;
  for (const auto& s : per_stock) {
    earnings += s.earnings();
    invested += s.buy_capital + s.buy_cost;
  }
  if (invested <= Money{}) return std::nullopt;
  return static_cast<double>(earnings.mils()) / static_cast<double>(invested.mils());
}

std::int64_t trading_frequency(std::span<const ActivitySequence> sequences, const LedgerOptions& options) {
  std::int64_t j = 0;
  for (const auto& s : sequences)
    for (const auto& e : s.entries)
      if (!e.virtual_close || options.count_virtual) ++j;
  return j;
}

void HoldingTime::merge(const HoldingTime& other) {
  trips.insert(trips.end(), other.trips.begin(), other.trips.end());
  matched_shares += other.matched_shares;
  share_centis += other.share_centis;
}

double HoldingTime::mean_days() const {
  if (matched_shares == 0) return 0.0;
  // Split the integer quotient so the division stays exact before scaling.
  Int128 denom = static_cast<Int128>(matched_shares) * kCentisPerDay;
  Int128 whole = share_centis / denom;
  Int128 rem = share_centis % denom;
  return static_cast<double>(whole) + static_cast<double>(rem) / static_cast<double>(denom);
}

HoldingTime holding_time_fifo(const ActivitySequence& seq) {
  struct Lot {
    std::int64_t shares;  // positive long, negative short
    std::int64_t opened;
  };
  HoldingTime out;
  std::deque<Lot> lots;
  for (const auto& e : seq.entries) {
    // A buy closes short lots; a sell closes long lots.
    std::int64_t qty = e.shares();
    const bool buying = e.volume < 0;
    const std::int64_t now = e.time.total_centis();
    while (qty > 0 && !lots.empty() && ((lots.front().shares < 0) == buying)) {
      auto& lot = lots.front();
      std::int64_t open = lot.shares < 0 ? -lot.shares : lot.shares;
      std::int64_t m = std::min(qty, open);
      std::int64_t dur = now - lot.opened;
      out.trips.push_back({m, dur});
      out.matched_shares += m;
      out.share_centis += static_cast<Int128>(m) * dur;
      qty -= m;
      open -= m;
      if (open == 0)
        lots.pop_front();
      else
        lot.shares = lot.shares < 0 ? -open : open;
    }
    if (qty > 0) lots.push_back({buying ? qty : -qty, now});
  }
  return out;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::winner: return "winner";
    case Outcome::loser: return "loser";
    case Outcome::flat: return "flat";
  }
  return "?";
}

InvestorEvaluation evaluate_investor(const InvestorBook& book, const FeeSchedule& schedule,
                                     const DividendTable& dividends, const LedgerOptions& options) {
  InvestorEvaluation ev;
  ev.per_stock.reserve(book.sequences.size());
  for (const auto& seq : book.sequences) {
    auto it = dividends.find(seq.stock_id);
    std::span<const DividendEvent> divs;
    if (it != dividends.end()) divs = it->second;
    ev.per_stock.push_back(stock_earnings(seq, schedule, divs, book.investor_class, options));
    ev.holding.merge(holding_time_fifo(seq));
  }
  ev.R = portfolio_return(ev.per_stock);
  ev.J = trading_frequency(book.sequences, options);
  return ev;
}

LedgerResult run_ledger(std::span<const Fill> fills, const StockTable& stocks, Timestamp period_end,
                        const FeeSchedules& fees, const DividendTable& dividends, const LedgerOptions& options,
                        const std::map<std::string, Price>& fallback_close, std::size_t workers) {
  LedgerResult result;

  struct OrderAgg {
    std::string trader;
    std::string stock;
    Side side;
    std::vector<FillLeg> legs;
  };
  std::unordered_map<std::string, std::size_t> order_slot;
  std::vector<OrderAgg> orders;
  std::map<std::string, InvestorClass> classes;
  std::size_t self_trades = 0;

  auto leg_for = [&](const Fill& f, Side side) {
    const auto& oid = side == Side::buy ? f.buy_order_id : f.sell_order_id;
    const auto& trader = side == Side::buy ? f.buyer : f.seller;
    auto cls = side == Side::buy ? f.buyer_class : f.seller_class;
    auto [cit, fresh] = classes.emplace(trader, cls);
    if (!fresh && cit->second != cls)
      result.diagnostics.push_back({Severity::warning, std::string(kSource), 0,
                                    fmt::format("trader {} appears with both investor classes; keeping {}", trader,
                                                to_string(cit->second))});
    std::string key = fmt::format("{}\x1f{}\x1f{}", f.stock_id, f.time.day, oid);
    auto [it, inserted] = order_slot.emplace(std::move(key), orders.size());
    if (inserted) orders.push_back({trader, f.stock_id, side, {}});
    orders[it->second].legs.push_back({f.size, f.price, f.time, f.sequence});
  };
  for (const auto& f : fills) {
    if (f.self_trade()) {
      ++self_trades;
      continue;
    }
    leg_for(f, Side::buy);
    leg_for(f, Side::sell);
  }
  if (self_trades > 0)
    result.diagnostics.push_back({Severity::warning, std::string(kSource), 0,
                                  fmt::format("{} self-trade fill(s) netted out", self_trades)});

  // (market, trader) -> stock -> entries
  std::map<std::pair<Market, std::string>, std::map<std::string, std::vector<Entry>>> grouped;
  std::set<std::string> missing_meta;
  for (const auto& o : orders) {
    auto meta = stocks.find(o.stock);
    if (meta == stocks.end()) {
      missing_meta.insert(o.stock);
      continue;
    }
    auto entry = aggregate_fills_to_entry(o.legs, o.side);
    if (entry) grouped[{meta->second.market, o.trader}][o.stock].push_back(*entry);
  }
  for (const auto& s : missing_meta)
    result.diagnostics.push_back(
        {Severity::error, std::string(kSource), 0, fmt::format("{}: fills without stock metadata ignored", s)});

  for (auto& [key, per_stock] : grouped) {
    InvestorBook book;
    book.market = key.first;
    book.investor_id = key.second;
    book.investor_class = classes.at(key.second);
    try {
      for (auto& [stock, entries] : per_stock) {
        std::sort(entries.begin(), entries.end(), entry_before);
        std::optional<Price> close = stocks.at(stock).period_end_price;
        if (!close) {
          if (auto it = fallback_close.find(stock); it != fallback_close.end()) close = it->second;
        }
        auto seq = build_activity_sequence(book.investor_id, stock, entries, close, period_end);
        if (!seq.entries.empty()) book.sequences.push_back(std::move(seq));
      }
    } catch (const LedgerError& e) {
      result.diagnostics.push_back({Severity::error, std::string(kSource), 0, e.what()});
      continue;
    }
    if (!book.sequences.empty()) result.books.push_back(std::move(book));
  }

  std::vector<InvestorEvaluation> evals(result.books.size());
  parallel_for(result.books.size(), workers, [&](std::size_t i) {
    const auto& b = result.books[i];
    evals[i] = evaluate_investor(b, fees.for_market(b.market), dividends, options);
  });
  for (std::size_t i = 0; i < result.books.size(); ++i) {
    const auto& b = result.books[i];
    if (!evals[i].R) {
      result.diagnostics.push_back({Severity::warning, std::string(kSource), 0,
                                    fmt::format("investor {} ({}) never bought; excluded", b.investor_id,
                                                to_string(b.market))});
      continue;
    }
    InvestorPerformance p;
    p.investor_id = b.investor_id;
    p.investor_class = b.investor_class;
    p.market = b.market;
    p.R = *evals[i].R;
    p.J = evals[i].J;
    p.dt_days = evals[i].holding.mean_days();
    p.label = outcome_of(p.R);
    result.performances.push_back(std::move(p));
    result.book_of.push_back(i);
  }
  return result;
}

// Shortest round-trip formatting, so `report` rebuilds identical statistics.
void write_performance(std::ostream& out, std::span<const InvestorPerformance> performances) {
  out << "investor,class,market,R,J,dt_days,label\n";
  for (const auto& p : performances)
    out << p.investor_id << ',' << to_string(p.investor_class) << ',' << to_string(p.market) << ','
        << fmt::format("{}", p.R) << ',' << p.J << ',' << fmt::format("{}", p.dt_days) << ','
        << to_string(p.label) << '\n';
}

}  // namespace stratscope
