#include "stratscope/orderflow.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "csv.hpp"

namespace stratscope {

namespace {

constexpr std::string_view kOrdersSource = "orders";
constexpr std::string_view kDividendsSource = "dividends";

std::size_t require_column(const std::vector<std::string_view>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (csv::trim(header[i]) == name) return i;
  throw ParseError(fmt::format("missing required column '{}'", name), 1);
}

std::optional<std::size_t> find_column(const std::vector<std::string_view>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (csv::trim(header[i]) == name) return i;
  return std::nullopt;
}

struct OrderColumns {
  std::size_t trader, cls, stock, side, kind, price, size, cancel_target, timestamp, order_id, max_index;
};

OrderColumns resolve(const std::vector<std::string_view>& header, const OrderSchema& s) {
  OrderColumns c{require_column(header, s.trader_id), require_column(header, s.investor_class),
                 require_column(header, s.stock),     require_column(header, s.side),
                 require_column(header, s.kind),      require_column(header, s.price),
                 require_column(header, s.size),      require_column(header, s.cancel_target),
                 require_column(header, s.timestamp), require_column(header, s.order_id), 0};
  c.max_index = std::max({c.trader, c.cls, c.stock, c.side, c.kind, c.price, c.size, c.cancel_target, c.timestamp,
                          c.order_id});
  return c;
}

std::int64_t parse_size(std::string_view text) {
  if (text.empty()) throw ParseError("missing size");
  if (text.front() == '-') throw ParseError("non-positive size");
  for (char ch : text)
    if (ch < '0' || ch > '9') throw ParseError(fmt::format("non-numeric size '{}'", text));
  if (text.size() > 15) throw ParseError(fmt::format("size '{}' out of range", text));
  std::int64_t v = std::stoll(std::string(text));
  if (v <= 0) throw ParseError("non-positive size");
  return v;
}

OrderEvent parse_order_row(const std::vector<std::string_view>& f, const OrderColumns& c,
                           const OrderParseOptions& options) {
  if (f.size() <= c.max_index) throw ParseError(fmt::format("expected at least {} fields, found {}", c.max_index + 1, f.size()));
  OrderEvent ev;
  ev.trader_id = std::string(csv::trim(f[c.trader]));
  ev.stock_id = std::string(csv::trim(f[c.stock]));
  ev.order_id = std::string(csv::trim(f[c.order_id]));
  if (ev.trader_id.empty()) throw ParseError("missing trader_id");
  if (ev.stock_id.empty()) throw ParseError("missing stock");
  if (ev.order_id.empty()) throw ParseError("missing order_id");
  ev.investor_class = parse_investor_class(csv::trim(f[c.cls]));
  ev.side = parse_side(csv::trim(f[c.side]));
  ev.kind = parse_order_kind(csv::trim(f[c.kind]));

  auto ts = csv::trim(f[c.timestamp]);
  if (ts.find(' ') == std::string_view::npos && options.default_date)
    ev.timestamp = Timestamp{*options.default_date, parse_time_of_day(ts)};
  else
    ev.timestamp = parse_timestamp(ts);

  auto price = csv::trim(f[c.price]);
  auto size = csv::trim(f[c.size]);
  auto target = csv::trim(f[c.cancel_target]);
  switch (ev.kind) {
    case OrderKind::limit: {
      if (price.empty()) throw ParseError("limit order without price");
      auto p = parse_money(price);
      if (p <= Money{}) throw ParseError("non-positive limit price");
      ev.price = p;
      ev.size = parse_size(size);
      if (!target.empty()) throw ParseError("cancel_target on a limit order");
      break;
    }
    case OrderKind::market:
      if (!price.empty()) throw ParseError("market order carries a price");
      ev.size = parse_size(size);
      if (!target.empty()) throw ParseError("cancel_target on a market order");
      break;
    case OrderKind::cancel:
      if (target.empty()) throw ParseError("cancel without cancel_target");
      if (!price.empty() || !size.empty()) throw ParseError("cancel carries price or size");
      ev.cancel_target = std::string(target);
      break;
  }
  return ev;
}

struct DayKey {
  std::string stock;
  std::int32_t day;
  bool operator==(const DayKey&) const = default;
};
struct DayKeyHash {
  std::size_t operator()(const DayKey& k) const {
    return std::hash<std::string>{}(k.stock) ^ (static_cast<std::size_t>(k.day) * 0x9E3779B97F4A7C15ull);
  }
};

}  // namespace

ParsedOrders parse_order_events(std::istream& in, const OrderSchema& schema, const OrderParseOptions& options) {
  ParsedOrders out;
  std::string line;
  std::size_t line_no = 0;
  OrderColumns cols{};
  bool have_header = false;
  while (!have_header && csv::next_line(in, line)) {
    ++line_no;
    if (csv::is_blank(line)) continue;
    cols = resolve(csv::split(line), schema);
    have_header = true;
  }
  if (!have_header) throw ParseError("missing header row");

  std::vector<std::size_t> lines;
  while (csv::next_line(in, line)) {
    ++line_no;
    if (csv::is_blank(line)) continue;
    OrderEvent ev;
    try {
      ev = parse_order_row(csv::split(line), cols, options);
    } catch (const ParseError& e) {
      out.diagnostics.push_back({Severity::error, std::string(kOrdersSource), line_no, e.reason()});
      continue;
    }
    if (!options.resort && !out.events.empty() && ev.timestamp < out.events.back().timestamp)
      throw ParseError("input not sorted by timestamp (set the resort flag to accept it)", line_no);
    out.events.push_back(std::move(ev));
    lines.push_back(line_no);
  }

  if (options.resort) {
    std::vector<std::size_t> order(out.events.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return out.events[a].timestamp < out.events[b].timestamp;
    });
    std::vector<OrderEvent> sorted;
    std::vector<std::size_t> sorted_lines;
    sorted.reserve(order.size());
    for (auto i : order) {
      sorted.push_back(std::move(out.events[i]));
      sorted_lines.push_back(lines[i]);
    }
    out.events = std::move(sorted);
    lines = std::move(sorted_lines);
  }

  // Identity checks need time order, so they run after any resort.
  std::unordered_map<DayKey, std::unordered_set<std::string>, DayKeyHash> seen;
  std::vector<OrderEvent> kept;
  kept.reserve(out.events.size());
  for (std::size_t i = 0; i < out.events.size(); ++i) {
    auto& ev = out.events[i];
    auto& ids = seen[DayKey{ev.stock_id, ev.timestamp.day}];
    if (ids.contains(ev.order_id)) {
      out.diagnostics.push_back({Severity::error, std::string(kOrdersSource), lines[i],
                                 fmt::format("duplicate order_id '{}' for {} on {}", ev.order_id, ev.stock_id,
                                             format_date(ev.timestamp.day))});
      continue;
    }
    if (ev.kind == OrderKind::cancel && !ids.contains(ev.cancel_target)) {
      out.diagnostics.push_back({Severity::error, std::string(kOrdersSource), lines[i],
                                 fmt::format("cancel references unknown order '{}'", ev.cancel_target)});
      continue;
    }
    ids.insert(ev.order_id);
    kept.push_back(std::move(ev));
  }
  out.events = std::move(kept);
  std::stable_sort(out.diagnostics.begin(), out.diagnostics.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
  return out;
}

void write_order_events(std::ostream& out, std::span<const OrderEvent> events) {
  out << kOrderHeader << '\n';
  for (const auto& ev : events) {
    out << ev.trader_id << ',' << (ev.investor_class == InvestorClass::individual ? "ind" : "inst") << ','
        << ev.stock_id << ',' << to_string(ev.side) << ',' << to_string(ev.kind) << ','
        << (ev.price ? format_money(*ev.price) : std::string{}) << ','
        << (ev.kind == OrderKind::cancel ? std::string{} : std::to_string(ev.size)) << ',' << ev.cancel_target
        << ',' << format_timestamp(ev.timestamp) << ',' << ev.order_id << '\n';
  }
}

std::string_view to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::call: return "call";
    case SessionPhase::cooling: return "cooling";
    case SessionPhase::continuous: return "continuous";
    case SessionPhase::closed: return "closed";
  }
  return "?";
}

void SessionTimes::validate() const {
  const std::int32_t seq[] = {call_open,     call_close,     cooling_open,    cooling_close,
                              morning_open,  morning_close,  afternoon_open,  afternoon_close};
  for (std::size_t i = 0; i < std::size(seq); ++i) {
    if (seq[i] < 0 || seq[i] > kCentisPerDay) throw ConfigError("session boundary outside the day");
    if (i % 2 == 1 && !(seq[i - 1] < seq[i])) throw ConfigError("session phase with non-positive length");
    if (i % 2 == 0 && i > 0 && seq[i] < seq[i - 1]) throw ConfigError("session phases overlap or are out of order");
  }
}

SessionPhase SessionTimes::phase_at(std::int32_t t) const {
  if (t >= call_open && t < call_close) return SessionPhase::call;
  if (t >= cooling_open && t < cooling_close) return SessionPhase::cooling;
  if ((t >= morning_open && t < morning_close) || (t >= afternoon_open && t < afternoon_close))
    return SessionPhase::continuous;
  return SessionPhase::closed;
}

TradingCalendar::TradingCalendar(std::vector<std::int32_t> days) : days_(std::move(days)) {
  std::sort(days_.begin(), days_.end());
  if (std::adjacent_find(days_.begin(), days_.end()) != days_.end())
    throw ConfigError("trading calendar lists a day twice");
}

TradingCalendar TradingCalendar::weekdays(std::int32_t first_day, std::size_t count) {
  std::vector<std::int32_t> days;
  for (std::int32_t d = first_day; days.size() < count; ++d) {
    // 1970-01-01 was a Thursday; index 0 == Thursday.
    int weekday = ((d % 7) + 7 + 3) % 7;  // 0 == Monday
    if (weekday < 5) days.push_back(d);
  }
  return TradingCalendar(std::move(days));
}

void TradingCalendar::set_sessions(std::int32_t day, const SessionTimes& times) {
  if (!contains(day)) throw std::out_of_range("non-trading day " + format_date(day));
  times.validate();
  overrides_[day] = times;
}

bool TradingCalendar::contains(std::int32_t day) const { return std::binary_search(days_.begin(), days_.end(), day); }

const SessionTimes& TradingCalendar::sessions(std::int32_t day) const {
  if (!contains(day)) throw std::out_of_range("non-trading day " + format_date(day));
  auto it = overrides_.find(day);
  return it == overrides_.end() ? defaults_ : it->second;
}

std::size_t TradingCalendar::index_of(std::int32_t day) const {
  auto it = std::lower_bound(days_.begin(), days_.end(), day);
  if (it == days_.end() || *it != day) throw std::out_of_range("non-trading day " + format_date(day));
  return static_cast<std::size_t>(it - days_.begin());
}

Timestamp TradingCalendar::period_end() const {
  if (days_.empty()) throw std::out_of_range("empty trading calendar");
  return Timestamp{days_.back(), sessions(days_.back()).afternoon_close};
}

SessionPhase session_phase(Timestamp t, const TradingCalendar& cal) { return cal.sessions(t.day).phase_at(t.centis); }

namespace {

struct SessionField {
  std::string_view name;
  std::int32_t SessionTimes::*member;
};

constexpr SessionField kSessionFields[] = {
    {"call_open", &SessionTimes::call_open},         {"call_close", &SessionTimes::call_close},
    {"cooling_open", &SessionTimes::cooling_open},   {"cooling_close", &SessionTimes::cooling_close},
    {"morning_open", &SessionTimes::morning_open},   {"morning_close", &SessionTimes::morning_close},
    {"afternoon_open", &SessionTimes::afternoon_open}, {"afternoon_close", &SessionTimes::afternoon_close},
};

}  // namespace

TradingCalendar load_calendar(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (header.empty() && csv::next_line(in, header_line)) {
    ++line_no;
    if (!csv::is_blank(header_line)) header = csv::split(header_line);
  }
  if (header.empty()) throw ParseError("missing calendar header");
  auto date_col = require_column(header, "date");
  std::vector<std::pair<std::size_t, const SessionField*>> overrides;
  for (const auto& field : kSessionFields)
    if (auto col = find_column(header, field.name)) overrides.emplace_back(*col, &field);

  std::vector<std::int32_t> days;
  std::vector<std::pair<std::int32_t, SessionTimes>> custom;
  while (csv::next_line(in, line)) {
    ++line_no;
    if (csv::is_blank(line)) continue;
    auto f = csv::split(line);
    try {
      if (f.size() <= date_col) throw ParseError("missing date");
      auto day = parse_date(csv::trim(f[date_col]));
      days.push_back(day);
      SessionTimes times;
      bool any = false;
      for (auto [col, field] : overrides) {
        if (col >= f.size() || csv::trim(f[col]).empty()) continue;
        times.*(field->member) = parse_time_of_day(csv::trim(f[col]));
        any = true;
      }
      if (any) {
        times.validate();
        custom.emplace_back(day, times);
      }
    } catch (const ParseError& e) {
      throw ParseError(e.reason(), line_no);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  TradingCalendar cal(std::move(days));
  for (auto& [day, times] : custom) cal.set_sessions(day, times);
  return cal;
}

void write_calendar(std::ostream& out, const TradingCalendar& cal) {
  out << "date";
  for (const auto& field : kSessionFields) out << ',' << field.name;
  out << '\n';
  const SessionTimes defaults;
  for (auto day : cal.days()) {
    out << format_date(day);
    const auto& times = cal.sessions(day);
    bool custom = !(times == defaults);
    for (const auto& field : kSessionFields) {
      out << ',';
      if (custom) out << format_time_of_day(times.*(field.member));
    }
    out << '\n';
  }
}

ParsedDividends load_dividends(std::istream& in, const std::set<std::string>* known_stocks) {
  ParsedDividends out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<DividendEvent, std::size_t>> rows;
  bool first = true;
  while (csv::next_line(in, line)) {
    ++line_no;
    if (csv::is_blank(line)) continue;
    auto f = csv::split(line);
    if (first) {
      first = false;
      if (!f.empty() && csv::trim(f[0]) == "stock") continue;
    }
    try {
      if (f.size() < 3) throw ParseError("expected stock,ex_date,cash_per_share");
      DividendEvent ev;
      ev.stock_id = std::string(csv::trim(f[0]));
      if (ev.stock_id.empty()) throw ParseError("missing stock");
      ev.ex_date = parse_date(csv::trim(f[1]));
      ev.cash_per_share = parse_money(csv::trim(f[2]), /*allow_negative=*/true);
      if (ev.cash_per_share < Money{}) throw ParseError("negative dividend");
      if (known_stocks && !known_stocks->contains(ev.stock_id))
        out.diagnostics.push_back({Severity::warning, std::string(kDividendsSource), line_no,
                                   fmt::format("unknown stock '{}'", ev.stock_id)});
      rows.emplace_back(std::move(ev), line_no);
    } catch (const ParseError& e) {
      out.diagnostics.push_back({Severity::error, std::string(kDividendsSource), line_no, e.reason()});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first.stock_id, a.first.ex_date) < std::tie(b.first.stock_id, b.first.ex_date);
  });
  for (auto& [ev, ln] : rows) {
    if (!out.events.empty() && out.events.back().stock_id == ev.stock_id && out.events.back().ex_date == ev.ex_date) {
      out.diagnostics.push_back({Severity::error, std::string(kDividendsSource), ln,
                                 fmt::format("duplicate dividend for {} on {}", ev.stock_id, format_date(ev.ex_date))});
      continue;
    }
    out.events.push_back(std::move(ev));
  }
  std::stable_sort(out.diagnostics.begin(), out.diagnostics.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
  return out;
}

void write_dividends(std::ostream& out, std::span<const DividendEvent> events) {
  out << "stock,ex_date,cash_per_share\n";
  for (const auto& ev : events)
    out << ev.stock_id << ',' << format_date(ev.ex_date) << ',' << format_money(ev.cash_per_share) << '\n';
}

StockTable load_stock_meta(std::istream& in) {
  StockTable table;
  std::string line, header_line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  while (header.empty() && csv::next_line(in, header_line)) {
    ++line_no;
    if (!csv::is_blank(header_line)) header = csv::split(header_line);
  }
  if (header.empty()) throw ParseError("missing stock table header");
  auto c_stock = require_column(header, "stock");
  auto c_market = require_column(header, "market");
  auto c_prev = require_column(header, "previous_close");
  auto c_end = find_column(header, "period_end_price");
  while (csv::next_line(in, line)) {
    ++line_no;
    if (csv::is_blank(line)) continue;
    auto f = csv::split(line);
    try {
      if (f.size() <= std::max({c_stock, c_market, c_prev})) throw ParseError("too few fields");
      StockMeta meta;
      meta.stock_id = std::string(csv::trim(f[c_stock]));
      if (meta.stock_id.empty()) throw ParseError("missing stock");
      meta.market = parse_market(csv::trim(f[c_market]));
      meta.previous_close = parse_money(csv::trim(f[c_prev]));
      if (meta.previous_close <= Money{}) throw ParseError("non-positive previous_close");
      if (c_end && *c_end < f.size() && !csv::trim(f[*c_end]).empty()) {
        meta.period_end_price = parse_money(csv::trim(f[*c_end]));
        if (*meta.period_end_price <= Money{}) throw ParseError("non-positive period_end_price");
      }
      if (table.contains(meta.stock_id)) throw ParseError(fmt::format("duplicate stock '{}'", meta.stock_id));
      table.emplace(meta.stock_id, std::move(meta));
    } catch (const ParseError& e) {
      throw ParseError(e.reason(), line_no);
    }
  }
  return table;
}

void write_stock_meta(std::ostream& out, const StockTable& stocks) {
  out << "stock,market,previous_close,period_end_price\n";
  for (const auto& [id, meta] : stocks)
    out << id << ',' << to_string(meta.market) << ',' << format_money(meta.previous_close) << ','
        << (meta.period_end_price ? format_money(*meta.period_end_price) : std::string{}) << '\n';
}

IndexSeries load_index_series(std::istream& in) {
  IndexSeries series;
  std::string line, header_line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  while (header.empty() && csv::next_line(in, header_line)) {
    ++line_no;
    if (!csv::is_blank(header_line)) header = csv::split(header_line);
  }
  if (header.empty()) throw ParseError("missing index header");
  auto c_date = require_column(header, "date");
  auto c_level = require_column(header, "level");
  auto c_market = find_column(header, "market");
  while (csv::next_line(in, line)) {
    ++line_no;
    if (csv::is_blank(line)) continue;
    auto f = csv::split(line);
    try {
      if (f.size() <= std::max(c_date, c_level)) throw ParseError("too few fields");
      Market m = Market::A;
      if (c_market && *c_market < f.size()) m = parse_market(csv::trim(f[*c_market]));
      auto level_text = std::string(csv::trim(f[c_level]));
      std::size_t used = 0;
      double level = std::stod(level_text, &used);
      if (used != level_text.size() || !(level > 0)) throw ParseError("index level must be positive");
      series.by_market[m].push_back({parse_date(csv::trim(f[c_date])), level});
    } catch (const ParseError& e) {
      throw ParseError(e.reason(), line_no);
    } catch (const std::invalid_argument&) {
      throw ParseError("non-numeric index level", line_no);
    }
  }
  for (auto& [m, points] : series.by_market)
    std::sort(points.begin(), points.end(), [](const IndexPoint& a, const IndexPoint& b) { return a.day < b.day; });
  return series;
}

}  // namespace stratscope
