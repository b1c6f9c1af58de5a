#include "stratscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "stratscope/matching.hpp"
#include "stratscope/parallel.hpp"
#include "stratscope/rng.hpp"

namespace stratscope {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t { kPopulationStream = 1, kPlanStream = 2, kStockStream = 4, kPlantedStream = 5 };

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void PopulationSpec::validate() const {
  if (agent_count() == 0) throw ConfigError("synth: at least one agent is required");
  if ((individuals_a + institutions_a) > 0 && stocks_a == 0) throw ConfigError("synth: A-share agents need stocks_a >= 1");
  if ((individuals_b + institutions_b) > 0 && stocks_b == 0) throw ConfigError("synth: B-share agents need stocks_b >= 1");
  if (stocks_a > 999 || stocks_b > 999) throw ConfigError("synth: at most 999 stocks per market");
  if (days == 0) throw ConfigError("synth: days must be >= 1");
  if (frequency.kind == FrequencyDistribution::Kind::power_law) {
    if (!(frequency.exponent > 0.0) || !std::isfinite(frequency.exponent))
      throw ConfigError("synth: frequency exponent must be positive");
    if (frequency.min < 1) throw ConfigError("synth: frequency min must be >= 1");
    if (frequency.cap < 2) throw ConfigError("synth: frequency cap must be >= 2");
    if (frequency.min > frequency.cap) throw ConfigError("synth: frequency min exceeds cap");
  } else if (frequency.constant < 1) {
    throw ConfigError("synth: constant frequency must be >= 1");
  }
  if (max_stocks_per_agent == 0) throw ConfigError("synth: max_stocks_per_agent must be >= 1");
  if (!std::isfinite(size_log_mean) || !(size_log_sd >= 0.0)) throw ConfigError("synth: bad order-size parameters");
  if (!(institution_size_factor > 0.0)) throw ConfigError("synth: institution_size_factor must be positive");
  if (lot < 1) throw ConfigError("synth: lot must be >= 1");
  if (!is_probability(market_order_probability)) throw ConfigError("synth: market_order_probability not in [0,1]");
  if (!is_probability(sell_probability)) throw ConfigError("synth: sell_probability not in [0,1]");
  if (!(price_band > 0.0 && price_band < 1.0)) throw ConfigError("synth: price_band must be in (0,1)");
  if (!(price_low_a > 0.0 && price_low_a <= price_high_a)) throw ConfigError("synth: bad A-share price range");
  if (!(price_low_b > 0.0 && price_low_b <= price_high_b)) throw ConfigError("synth: bad B-share price range");
  if (budget_constrained && !(budget > 0.0)) throw ConfigError("synth: budget must be positive");
}

DiscretePowerLaw::DiscretePowerLaw(double exponent, std::int64_t min, std::int64_t cap) : min_(min) {
  if (min < 1 || cap < min) throw ConfigError("power law: need 1 <= min <= cap");
  cdf_.reserve(static_cast<std::size_t>(cap - min + 1));
  double acc = 0.0;
  for (std::int64_t j = min; j <= cap; ++j) {
    acc += std::pow(static_cast<double>(j), -exponent);
    cdf_.push_back(acc);
  }
  for (auto& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::int64_t DiscretePowerLaw::sample(double u) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return min_ + (it - cdf_.begin());
}

Roster generate_population(const PopulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::optional<DiscretePowerLaw> law;
  if (spec.frequency.kind == FrequencyDistribution::Kind::power_law)
    law.emplace(spec.frequency.exponent, spec.frequency.min, spec.frequency.cap);

  Roster roster;
  roster.agents.reserve(spec.agent_count());
  const std::pair<std::size_t, std::pair<Market, InvestorClass>> groups[] = {
      {spec.individuals_a, {Market::A, InvestorClass::individual}},
      {spec.institutions_a, {Market::A, InvestorClass::institution}},
      {spec.individuals_b, {Market::B, InvestorClass::individual}},
      {spec.institutions_b, {Market::B, InvestorClass::institution}},
  };
  for (const auto& [count, cell] : groups) {
    for (std::size_t k = 0; k < count; ++k) {
      const auto idx = roster.agents.size();
      SplitMix64 rng(derive_seed(seed, kPopulationStream, idx));
      Agent a;
      a.trader_id = fmt::format("T{:06d}", idx + 1);
      a.market = cell.first;
      a.investor_class = cell.second;
      a.target_frequency = law ? (*law)(rng) : spec.frequency.constant;
      roster.agents.push_back(std::move(a));
    }
  }
  return roster;
}

namespace {

std::string stock_id_for(Market m, std::size_t k) { return fmt::format("{}{:03d}", m == Market::A ? "000" : "200", k + 1); }

std::vector<std::string> stock_ids(const PopulationSpec& spec, Market m) {
  std::vector<std::string> ids;
  const auto n = m == Market::A ? spec.stocks_a : spec.stocks_b;
  for (std::size_t k = 0; k < n; ++k) ids.push_back(stock_id_for(m, k));
  return ids;
}

Price to_price(double units) {
  auto cents = static_cast<std::int64_t>(std::llround(units * 100.0));
  return Price::from_cents(std::max<std::int64_t>(cents, 1));
}

}  // namespace

StockTable generate_stock_table(const PopulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  StockTable table;
  for (auto m : {Market::A, Market::B}) {
    const double lo = m == Market::A ? spec.price_low_a : spec.price_low_b;
    const double hi = m == Market::A ? spec.price_high_a : spec.price_high_b;
    for (const auto& id : stock_ids(spec, m)) {
      SplitMix64 rng(derive_seed(seed, kStockStream, stable_hash(id)));
      const double price = lo * std::exp(uniform01(rng) * std::log(hi / lo));
      table[id] = StockMeta{id, m, to_price(price), std::nullopt};
    }
  }
  return table;
}

TradingCalendar synth_calendar(const PopulationSpec& spec) { return TradingCalendar::weekdays(spec.first_day, spec.days); }

namespace {

// Trading windows (call auction and both continuous sessions) laid end to end.
class TradingClock {
 public:
  TradingClock(const TradingCalendar& cal, std::size_t days) {
    for (std::size_t d = 0; d < days; ++d) {
      const auto day = cal.days()[d];
      const auto& s = cal.sessions(day);
      add(day, s.call_open, s.call_close);
      add(day, s.morning_open, s.morning_close);
      add(day, s.afternoon_open, s.afternoon_close);
    }
  }
  std::int64_t total() const { return total_; }
  Timestamp at(std::int64_t offset) const {
    auto it = std::upper_bound(windows_.begin(), windows_.end(), offset,
                               [](std::int64_t x, const Window& w) { return x < w.offset; });
    --it;
    return {it->day, static_cast<std::int32_t>(it->start + (offset - it->offset))};
  }

 private:
  struct Window {
    std::int64_t offset;
    std::int32_t day;
    std::int32_t start;
  };
  void add(std::int32_t day, std::int32_t from, std::int32_t to) {
    if (to <= from) return;
    windows_.push_back({total_, day, from});
    total_ += to - from;
  }
  std::vector<Window> windows_;
  std::int64_t total_ = 0;
};

// An order decided before prices are known.
struct PlannedOrder {
  Timestamp time;
  std::uint32_t agent = 0;
  std::uint32_t ordinal = 0;  // per agent, in time order
  bool market = false;
  bool wants_sell = false;
  std::int64_t lots = 1;
  double limit_draw = 0.0;  // uniform in [0,1), mapped into the price band
};

struct StockPlan {
  std::vector<PlannedOrder> orders;
};

}  // namespace

SynthOrderFlow generate_orderflow(const Roster& roster, const PopulationSpec& spec, const TradingCalendar& cal,
                                  const StockTable& stocks, std::uint64_t seed, std::size_t workers) {
  spec.validate();
  if (cal.days().size() < spec.days)
    throw ConfigError(fmt::format("synth: calendar has {} day(s), spec needs {}", cal.days().size(), spec.days));
  const TradingClock clock(cal, spec.days);
  const std::vector<std::string> ids_a = stock_ids(spec, Market::A), ids_b = stock_ids(spec, Market::B);

  std::map<std::string, StockPlan> plans;
  for (const auto& id : ids_a) plans[id];
  for (const auto& id : ids_b) plans[id];

  // Per-agent plans: times, stocks, kinds, sizes. Each agent has its own stream.
  for (std::size_t i = 0; i < roster.agents.size(); ++i) {
    const auto& agent = roster.agents[i];
    const auto n = static_cast<std::size_t>(agent.target_frequency);
    if (n == 0) continue;
    SplitMix64 rng(derive_seed(seed, kPlanStream, i));
    const auto& universe = agent.market == Market::A ? ids_a : ids_b;
    if (universe.empty()) throw ConfigError(fmt::format("synth: no stocks for market {}", to_string(agent.market)));

    // Uniform order statistics from normalised exponential gaps.
    std::vector<double> gaps(n + 1);
    double sum = 0.0;
    for (auto& g : gaps) sum += (g = exponential(rng, 1.0));
    std::vector<std::int64_t> offsets(n);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += gaps[k];
      auto off = static_cast<std::int64_t>(acc / sum * static_cast<double>(clock.total()));
      offsets[k] = std::clamp<std::int64_t>(off, 0, clock.total() - 1);
    }

    // Stocks: a random subset, orders dealt so each stock gets a near-equal share.
    const auto n_stocks = std::min({universe.size(), spec.max_stocks_per_agent, std::max<std::size_t>(1, n / 2)});
    std::vector<std::size_t> pick(universe.size());
    std::iota(pick.begin(), pick.end(), 0);
    for (std::size_t k = 0; k < n_stocks; ++k)
      std::swap(pick[k], pick[k + uniform_below(rng, pick.size() - k)]);
    std::vector<std::size_t> assignment(n);
    for (std::size_t k = 0; k < n; ++k) assignment[k] = pick[k % n_stocks];
    for (std::size_t k = n; k > 1; --k) std::swap(assignment[k - 1], assignment[uniform_below(rng, k)]);

    const double size_mean =
        spec.size_log_mean + (agent.investor_class == InvestorClass::institution ? std::log(spec.institution_size_factor) : 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      PlannedOrder o;
      o.time = clock.at(offsets[k]);
      o.agent = static_cast<std::uint32_t>(i);
      o.ordinal = static_cast<std::uint32_t>(k);
      o.market = uniform01(rng) < spec.market_order_probability;
      o.wants_sell = uniform01(rng) < spec.sell_probability;
      o.lots = std::max<std::int64_t>(1, std::llround(std::exp(size_mean + spec.size_log_sd * standard_normal(rng))));
      o.limit_draw = uniform01(rng);
      plans[universe[assignment[k]]].orders.push_back(o);
    }
  }

  // Per-stock pricing against a live book so limits track the last trade.
  std::vector<std::string> ids;
  for (const auto& [id, plan] : plans) ids.push_back(id);
  std::vector<std::vector<OrderEvent>> per_stock(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t s) {
    const auto& id = ids[s];
    auto& orders = plans.at(id).orders;
    std::sort(orders.begin(), orders.end(), [](const PlannedOrder& a, const PlannedOrder& b) {
      if (a.time != b.time) return a.time < b.time;
      if (a.agent != b.agent) return a.agent < b.agent;
      return a.ordinal < b.ordinal;
    });
    const auto meta = stocks.find(id);
    if (meta == stocks.end()) throw ConfigError(fmt::format("synth: no reference price for {}", id));
    struct Holding {
      bool seen = false;
      std::int64_t shares = 0;
      double cash = 0.0;
    };
    std::unordered_map<std::uint32_t, Holding> holdings;
    OrderBook book(id);
    Price prev_close = meta->second.previous_close;
    auto& out = per_stock[s];
    out.reserve(orders.size());

    std::size_t k = 0;
    for (std::size_t d = 0; d < spec.days; ++d) {
      const auto day = cal.days()[d];
      DayReplayer day_replay(book, cal.sessions(day), day, prev_close);
      for (; k < orders.size() && orders[k].time.day == day; ++k) {
        const auto& o = orders[k];
        const auto& agent = roster.agents[o.agent];
        auto& h = holdings[o.agent];
        const bool first = !h.seen;
        if (first) {
          h.seen = true;
          h.cash = spec.budget / static_cast<double>(spec.max_stocks_per_agent);
        }
        const Price ref = book.last_price().value_or(prev_close);
        bool sell = !first && o.wants_sell;  // first action on this stock is a buy
        std::int64_t size = o.lots * spec.lot;
        if (spec.budget_constrained) {
          if (sell) {
            if (h.shares <= 0)
              sell = false;
            else
              size = std::min(size, h.shares);
          }
          if (!sell) {
            const double lot_cost = ref.to_double() * static_cast<double>(spec.lot);
            const auto affordable = static_cast<std::int64_t>(h.cash / lot_cost);
            size = std::max<std::int64_t>(1, std::min(o.lots, affordable)) * spec.lot;
          }
        }
        OrderEvent ev;
        ev.trader_id = agent.trader_id;
        ev.investor_class = agent.investor_class;
        ev.stock_id = id;
        ev.side = sell ? Side::sell : Side::buy;
        ev.kind = o.market ? OrderKind::market : OrderKind::limit;
        if (!o.market) {
          const double offset = (2.0 * o.limit_draw - 1.0) * spec.price_band;
          ev.price = to_price(ref.to_double() * (1.0 + offset));
        }
        ev.size = size;
        ev.timestamp = o.time;
        ev.order_id = fmt::format("{}-{}", agent.trader_id, o.ordinal + 1);
        if (sell) {
          h.shares -= size;
        } else {
          h.shares += size;
          h.cash -= ref.to_double() * static_cast<double>(size);
        }
        day_replay.on_event(ev);
        out.push_back(std::move(ev));
      }
      day_replay.finish();
      if (auto last = book.last_price()) prev_close = *last;
    }
  });

  SynthOrderFlow result;
  std::size_t total = 0;
  for (const auto& v : per_stock) total += v.size();
  result.events.reserve(total);
  for (auto& v : per_stock)
    for (auto& ev : v) result.events.push_back(std::move(ev));
  // per_stock is in stock-id order and each list is time ordered, so a stable
  // sort on time alone yields (timestamp, stock, per-stock order).
  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const OrderEvent& a, const OrderEvent& b) { return a.timestamp < b.timestamp; });
  result.truth.spec = spec;
  result.truth.seed = seed;
  return result;
}

std::vector<InvestorPerformance> planted_performances(const Roster& roster, const PlantedRelation& relation,
                                                      std::uint64_t seed) {
  std::vector<InvestorPerformance> out;
  out.reserve(roster.agents.size());
  for (std::size_t i = 0; i < roster.agents.size(); ++i) {
    const auto& a = roster.agents[i];
    SplitMix64 rng(derive_seed(seed, kPlantedStream, i));
    const double j = static_cast<double>(a.target_frequency);
    double r = relation.return_scale * std::pow(j, -relation.alpha);
    double dt = relation.holding_scale * std::pow(j, -relation.gamma);
    if (relation.noise > 0.0) {
      r *= std::exp(relation.noise * standard_normal(rng));
      dt *= std::exp(relation.noise * standard_normal(rng));
    }
    out.push_back({a.trader_id, a.investor_class, a.market, r, a.target_frequency, dt, outcome_of(r)});
  }
  return out;
}

std::string ground_truth_json(const GroundTruth& truth) {
  const auto& s = truth.spec;
  nlohmann::ordered_json j;
  j["seed"] = truth.seed;
  auto& p = j["population"];
  p["individuals_a"] = s.individuals_a;
  p["institutions_a"] = s.institutions_a;
  p["individuals_b"] = s.individuals_b;
  p["institutions_b"] = s.institutions_b;
  p["stocks_a"] = s.stocks_a;
  p["stocks_b"] = s.stocks_b;
  p["days"] = s.days;
  p["first_day"] = format_date(s.first_day);
  auto& f = p["frequency"];
  f["kind"] = s.frequency.kind == FrequencyDistribution::Kind::power_law ? "power_law" : "constant";
  f["exponent"] = s.frequency.exponent;
  f["min"] = s.frequency.min;
  f["cap"] = s.frequency.cap;
  f["constant"] = s.frequency.constant;
  p["max_stocks_per_agent"] = s.max_stocks_per_agent;
  p["size_log_mean"] = s.size_log_mean;
  p["size_log_sd"] = s.size_log_sd;
  p["institution_size_factor"] = s.institution_size_factor;
  p["lot"] = s.lot;
  p["market_order_probability"] = s.market_order_probability;
  p["sell_probability"] = s.sell_probability;
  p["price_band"] = s.price_band;
  p["price_range_a"] = {s.price_low_a, s.price_high_a};
  p["price_range_b"] = {s.price_low_b, s.price_high_b};
  p["budget_constrained"] = s.budget_constrained;
  p["budget"] = s.budget;
  if (truth.planted) {
    auto& r = j["planted"];
    r["alpha"] = truth.planted->alpha;
    r["gamma"] = truth.planted->gamma;
    r["return_scale"] = truth.planted->return_scale;
    r["holding_scale"] = truth.planted->holding_scale;
    r["noise"] = truth.planted->noise;
  } else {
    j["planted"] = nullptr;
  }
  return j.dump(2) + "\n";
}

}  // namespace stratscope
