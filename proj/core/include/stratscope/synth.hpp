#pragma once

// Zero-intelligence order-flow generator. Agents submit random orders with
// no optimisation or memory; the resulting stream is valid order-flow input
// and replays through the matching engine.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stratscope/ledger.hpp"
#include "stratscope/orderflow.hpp"
#include "stratscope/types.hpp"

namespace stratscope {

struct FrequencyDistribution {
  enum class Kind : std::uint8_t { power_law, constant };
  Kind kind = Kind::power_law;
  double exponent = 2.5;      // P(J) ~ J^-exponent on [min, cap]
  std::int64_t min = 2;
  std::int64_t cap = 1000;
  std::int64_t constant = 4;  // used when kind == constant

  friend bool operator==(const FrequencyDistribution&, const FrequencyDistribution&) = default;
};

struct PopulationSpec {
  std::size_t individuals_a = 7000;
  std::size_t institutions_a = 1000;
  std::size_t individuals_b = 1600;
  std::size_t institutions_b = 400;
  std::size_t stocks_a = 32;
  std::size_t stocks_b = 11;
  std::size_t days = 20;
  std::int32_t first_day = 12054;  // 2003-01-02

  FrequencyDistribution frequency;
  std::size_t max_stocks_per_agent = 4;

  // Order size in lots: round(exp(N(log_mean, log_sd))), at least one lot.
  double size_log_mean = 1.5;
  double size_log_sd = 1.0;
  double institution_size_factor = 5.0;
  std::int64_t lot = 100;

  double market_order_probability = 0.1;
  double sell_probability = 0.6;  // after the first (always buy) order on a stock
  double price_band = 0.05;       // limit offset uniform in [-band, +band] around the last price

  // Initial reference prices, log-uniform per market, in currency units.
  double price_low_a = 5.0;
  double price_high_a = 30.0;
  double price_low_b = 0.5;
  double price_high_b = 5.0;

  // Budget variant: buys capped by a cash allowance per (agent, stock) and
  // sells capped by the agent's submitted holdings.
  bool budget_constrained = false;
  double budget = 1.0e6;

  // Throws ConfigError on invalid or degenerate parameters.
  void validate() const;
  std::size_t agent_count() const { return individuals_a + institutions_a + individuals_b + institutions_b; }

  friend bool operator==(const PopulationSpec&, const PopulationSpec&) = default;
};

struct Agent {
  std::string trader_id;
  InvestorClass investor_class = InvestorClass::individual;
  Market market = Market::A;
  std::int64_t target_frequency = 0;  // submitted orders over the period
};

struct Roster {
  std::vector<Agent> agents;  // A individuals, A institutions, B individuals, B institutions
};

Roster generate_population(const PopulationSpec& spec, std::uint64_t seed);

// Discrete power-law sampler on [min, cap] via the inverse CDF.
class DiscretePowerLaw {
 public:
  DiscretePowerLaw(double exponent, std::int64_t min, std::int64_t cap);
  template <class Gen>
  std::int64_t operator()(Gen& g) const;

 private:
  std::int64_t sample(double u) const;
  std::int64_t min_;
  std::vector<double> cdf_;
};

// Stock ids and initial reference prices: A shares "000001".., B shares "200001"...
StockTable generate_stock_table(const PopulationSpec& spec, std::uint64_t seed);
TradingCalendar synth_calendar(const PopulationSpec& spec);

// Mapping planted into synthetic performance samples for fit-recovery tests:
// R = return_scale * J^-alpha and dt = holding_scale * J^-gamma, each times
// an independent log-normal factor exp(noise * N(0,1)).
struct PlantedRelation {
  double alpha = 0.31;
  double gamma = 0.20;
  double return_scale = 0.5;
  double holding_scale = 30.0;
  double noise = 0.0;
};

struct GroundTruth {
  PopulationSpec spec;
  std::uint64_t seed = 0;
  std::optional<PlantedRelation> planted;
};

std::string ground_truth_json(const GroundTruth& truth);

struct SynthOrderFlow {
  std::vector<OrderEvent> events;  // sorted by (timestamp, stock, per-stock order)
  GroundTruth truth;
};

// Each agent's submission times are uniform order statistics over the
// trading time of the period (exponential gaps normalised to the target
// count), so realised counts equal the targets. Stocks are priced
// concurrently with per-stock streams; output is independent of `workers`.
SynthOrderFlow generate_orderflow(const Roster& roster, const PopulationSpec& spec, const TradingCalendar& cal,
                                  const StockTable& stocks, std::uint64_t seed, std::size_t workers = 1);

// One performance sample per agent with the planted relation (market, class
// and J taken from the roster).
std::vector<InvestorPerformance> planted_performances(const Roster& roster, const PlantedRelation& relation,
                                                      std::uint64_t seed);

template <class Gen>
std::int64_t DiscretePowerLaw::operator()(Gen& g) const {
  return sample(static_cast<double>(g() >> 11) * 0x1.0p-53);
}

}  // namespace stratscope
