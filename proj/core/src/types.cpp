#include "stratscope/types.hpp"

#include <charconv>
#include <chrono>

#include <fmt/format.h>

namespace stratscope {

std::string_view to_string(Side s) { return s == Side::buy ? "buy" : "sell"; }

std::string_view to_string(InvestorClass c) {
  return c == InvestorClass::individual ? "individual" : "institution";
}

std::string_view to_string(Market m) { return m == Market::A ? "A" : "B"; }

std::string_view to_string(OrderKind k) {
  switch (k) {
    case OrderKind::limit: return "limit";
    case OrderKind::market: return "market";
    case OrderKind::cancel: return "cancel";
  }
  return "?";
}

Side parse_side(std::string_view s) {
  if (s == "buy" || s == "B" || s == "b") return Side::buy;
  if (s == "sell" || s == "S" || s == "s") return Side::sell;
  throw ParseError(fmt::format("unknown side '{}'", s));
}

InvestorClass parse_investor_class(std::string_view s) {
  if (s == "ind" || s == "individual") return InvestorClass::individual;
  if (s == "inst" || s == "institution") return InvestorClass::institution;
  throw ParseError(fmt::format("unknown investor class '{}'", s));
}

Market parse_market(std::string_view s) {
  if (s == "A") return Market::A;
  if (s == "B") return Market::B;
  throw ParseError(fmt::format("unknown market '{}'", s));
}

OrderKind parse_order_kind(std::string_view s) {
  if (s == "limit") return OrderKind::limit;
  if (s == "market") return OrderKind::market;
  if (s == "cancel") return OrderKind::cancel;
  throw ParseError(fmt::format("unknown order kind '{}'", s));
}

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

std::int64_t to_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(fmt::format("not an integer '{}'", s));
  return v;
}

// Parses an unsigned decimal with at most `scale_digits` fractional digits into an integer scaled by 10^scale.
std::int64_t parse_scaled(std::string_view text, int scale_digits, std::string_view what) {
  auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() && frac.empty()) throw ParseError(fmt::format("empty {}", what));
  if (!whole.empty() && !all_digits(whole)) throw ParseError(fmt::format("non-numeric {} '{}'", what, text));
  if (dot != std::string_view::npos && !all_digits(frac)) throw ParseError(fmt::format("non-numeric {} '{}'", what, text));
  if (static_cast<int>(frac.size()) > scale_digits)
    throw ParseError(fmt::format("{} '{}' has more than {} decimal places", what, text, scale_digits));
  if (whole.size() > 12) throw ParseError(fmt::format("{} '{}' out of range", what, text));
  std::int64_t value = whole.empty() ? 0 : to_int(whole);
  for (int i = 0; i < scale_digits; ++i) {
    value *= 10;
    if (i < static_cast<int>(frac.size())) value += frac[i] - '0';
  }
  return value;
}

}  // namespace

Money parse_money(std::string_view text, bool allow_negative) {
  bool negative = false;
  if (!text.empty() && text.front() == '-') {
    if (!allow_negative) throw ParseError(fmt::format("negative amount '{}'", text));
    negative = true;
    text.remove_prefix(1);
  }
  auto mils = parse_scaled(text, 3, "amount");
  return Money::from_mils(negative ? -mils : mils);
}

std::string format_money(Money m) {
  std::int64_t v = m.mils();
  const char* sign = v < 0 ? "-" : "";
  std::uint64_t a = v < 0 ? static_cast<std::uint64_t>(-v) : static_cast<std::uint64_t>(v);
  if (a % 10 == 0) return fmt::format("{}{}.{:02}", sign, a / 1000, (a % 1000) / 10);
  return fmt::format("{}{}.{:03}", sign, a / 1000, a % 1000);
}

Rate parse_rate(std::string_view text) {
  bool percent = !text.empty() && text.back() == '%';
  if (percent) text.remove_suffix(1);
  // A percentage carries two fewer decimal places of headroom.
  auto v = parse_scaled(text, percent ? 6 : 8, "rate");
  return Rate{v};
}

std::string format_rate(Rate r) {
  // Render as a percentage with trailing zeros trimmed: 150000 -> "0.15%".
  std::int64_t v = r.per_1e8;
  std::string s = fmt::format("{}.{:06}", v / 1000000, v % 1000000);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s + "%";
}

Money round_half_up_to_cents(Int128 mils_e8) {
  constexpr Int128 kPerCent = static_cast<Int128>(10) * 100000000;
  Int128 cents = (mils_e8 + kPerCent / 2) / kPerCent;
  return Money::from_cents(static_cast<std::int64_t>(cents));
}

std::int32_t parse_date(std::string_view text) {
  using namespace std::chrono;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw ParseError(fmt::format("bad date '{}'", text));
  auto y = text.substr(0, 4), m = text.substr(5, 2), d = text.substr(8, 2);
  if (!all_digits(y) || !all_digits(m) || !all_digits(d)) throw ParseError(fmt::format("bad date '{}'", text));
  year_month_day ymd{year{static_cast<int>(to_int(y))}, month{static_cast<unsigned>(to_int(m))},
                     day{static_cast<unsigned>(to_int(d))}};
  if (!ymd.ok()) throw ParseError(fmt::format("invalid date '{}'", text));
  return static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count());
}

std::string format_date(std::int32_t day_index) {
  using namespace std::chrono;
  year_month_day ymd{sys_days{days{day_index}}};
  return fmt::format("{:04}-{:02}-{:02}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

std::int32_t parse_time_of_day(std::string_view text) {
  if (text.size() < 8 || text[2] != ':' || text[5] != ':') throw ParseError(fmt::format("bad timestamp '{}'", text));
  auto h = text.substr(0, 2), m = text.substr(3, 2), s = text.substr(6, 2);
  if (!all_digits(h) || !all_digits(m) || !all_digits(s)) throw ParseError(fmt::format("bad timestamp '{}'", text));
  std::int32_t cs = 0;
  if (text.size() > 8) {
    if (text[8] != '.') throw ParseError(fmt::format("bad timestamp '{}'", text));
    auto frac = text.substr(9);
    if (!all_digits(frac)) throw ParseError(fmt::format("bad timestamp '{}'", text));
    if (frac.size() > 2) throw ParseError(fmt::format("timestamp '{}': resolution finer than 0.01 s", text));
    cs = static_cast<std::int32_t>(to_int(frac));
    if (frac.size() == 1) cs *= 10;
  }
  auto hh = to_int(h), mm = to_int(m), ss = to_int(s);
  if (hh > 23 || mm > 59 || ss > 59) throw ParseError(fmt::format("bad timestamp '{}'", text));
  return static_cast<std::int32_t>(((hh * 60 + mm) * 60 + ss) * 100 + cs);
}

std::string format_time_of_day(std::int32_t centis) {
  auto cs = centis % 100;
  auto secs = centis / 100;
  return fmt::format("{:02}:{:02}:{:02}.{:02}", secs / 3600, (secs / 60) % 60, secs % 60, cs);
}

Timestamp parse_timestamp(std::string_view text) {
  auto space = text.find(' ');
  if (space == std::string_view::npos) throw ParseError(fmt::format("bad timestamp '{}'", text));
  return Timestamp{parse_date(text.substr(0, space)), parse_time_of_day(text.substr(space + 1))};
}

std::string format_timestamp(Timestamp t) { return format_date(t.day) + " " + format_time_of_day(t.centis); }

double days_between(Timestamp from, Timestamp to) {
  return static_cast<double>(to.total_centis() - from.total_centis()) / kCentisPerDay;
}

}  // namespace stratscope
