#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stratscope {

// Wide accumulator for exact products of amounts and rates.
__extension__ using Int128 = __int128;

// Fixed-point currency amount in thousandths of a unit ("mils").
// Prices are Money per share; every accounting path stays in integers.
class Money {
 public:
  constexpr Money() = default;
  static constexpr Money from_mils(std::int64_t mils) { return Money(mils); }
  static constexpr Money from_cents(std::int64_t cents) { return Money(cents * 10); }
  static constexpr Money from_units(std::int64_t units) { return Money(units * 1000); }

  constexpr std::int64_t mils() const { return mils_; }
  constexpr double to_double() const { return static_cast<double>(mils_) / 1000.0; }
  constexpr bool is_zero() const { return mils_ == 0; }

  constexpr Money& operator+=(Money o) { mils_ += o.mils_; return *this; }
  constexpr Money& operator-=(Money o) { mils_ -= o.mils_; return *this; }
  friend constexpr Money operator+(Money a, Money b) { return Money(a.mils_ + b.mils_); }
  friend constexpr Money operator-(Money a, Money b) { return Money(a.mils_ - b.mils_); }
  friend constexpr Money operator-(Money a) { return Money(-a.mils_); }
  friend constexpr Money operator*(Money a, std::int64_t n) { return Money(a.mils_ * n); }
  friend constexpr Money operator*(std::int64_t n, Money a) { return Money(a.mils_ * n); }
  friend constexpr auto operator<=>(Money, Money) = default;

 private:
  constexpr explicit Money(std::int64_t mils) : mils_(mils) {}
  std::int64_t mils_ = 0;
};

using Price = Money;

// Proportional fee rate in units of 1e-8 (0.15% == 150000).
struct Rate {
  std::int64_t per_1e8 = 0;
  constexpr double to_double() const { return static_cast<double>(per_1e8) / 1e8; }
  friend constexpr Rate operator+(Rate a, Rate b) { return Rate{a.per_1e8 + b.per_1e8}; }
  friend constexpr auto operator<=>(Rate, Rate) = default;
};

inline constexpr std::int32_t kCentisPerDay = 24 * 3600 * 100;

// Exchange-local instant: day index (days since 1970-01-01) plus centiseconds since midnight.
struct Timestamp {
  std::int32_t day = 0;
  std::int32_t centis = 0;

  constexpr std::int64_t total_centis() const {
    return static_cast<std::int64_t>(day) * kCentisPerDay + centis;
  }
  friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

enum class Side : std::uint8_t { buy, sell };
enum class InvestorClass : std::uint8_t { individual, institution };
enum class Market : std::uint8_t { A, B };
enum class OrderKind : std::uint8_t { limit, market, cancel };

constexpr Side opposite(Side s) { return s == Side::buy ? Side::sell : Side::buy; }

std::string_view to_string(Side s);
std::string_view to_string(InvestorClass c);
std::string_view to_string(Market m);
std::string_view to_string(OrderKind k);

Side parse_side(std::string_view s);
InvestorClass parse_investor_class(std::string_view s);
Market parse_market(std::string_view s);
OrderKind parse_order_kind(std::string_view s);

enum class Severity : std::uint8_t { info, warning, error };

// A positioned, non-fatal finding attached to a stage's output.
struct Diagnostic {
  Severity severity = Severity::warning;
  std::string source;
  std::size_t line = 0;  // 0 when not tied to an input line
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

using Diagnostics = std::vector<Diagnostic>;

// Thrown for input that cannot be interpreted at all (bad field, bad file layout).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message),
        line_(line), reason_(std::move(message)) {}
  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

// Thrown for invalid configuration or parameter sets.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Decimal "12.345" -> Money. At most three fractional digits; no exponent, no sign unless allowed.
Money parse_money(std::string_view text, bool allow_negative = false);
std::string format_money(Money m);

// "0.15%" or "0.0015" -> Rate. Exact to 1e-8.
Rate parse_rate(std::string_view text);
std::string format_rate(Rate r);

// Round-half-up of a non-negative quantity expressed in mils * 1e-8 to whole cents.
Money round_half_up_to_cents(Int128 mils_e8);

// "YYYY-MM-DD" -> day index.
std::int32_t parse_date(std::string_view text);
std::string format_date(std::int32_t day);
// "HH:MM:SS[.c[c]]" -> centiseconds since midnight; finer resolution is rejected.
std::int32_t parse_time_of_day(std::string_view text);
std::string format_time_of_day(std::int32_t centis);
// "YYYY-MM-DD HH:MM:SS.cc"
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

// Elapsed calendar time in days.
double days_between(Timestamp from, Timestamp to);

}  // namespace stratscope
