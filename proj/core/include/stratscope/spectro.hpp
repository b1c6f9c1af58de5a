#pragma once

// Stylized-fact extraction: winner/loser pools, geometric binning, log-log
// power-law fits, the alpha = beta * gamma consistency check, box statistics
// and the equal-weight buy-and-hold benchmark.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratscope/ledger.hpp"
#include "stratscope/orderflow.hpp"
#include "stratscope/types.hpp"

namespace stratscope {

struct Cell {
  Market market = Market::A;
  InvestorClass investor_class = InvestorClass::individual;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct Pools {
  std::vector<std::size_t> winners;  // indices into the classified input
  std::vector<std::size_t> losers;
  std::vector<std::size_t> flats;

  std::size_t total() const { return winners.size() + losers.size() + flats.size(); }
  double winner_fraction() const;
  double loser_fraction() const;
};

// Strict-sign partition per (market, class).
std::map<Cell, Pools> classify_investors(std::span<const InvestorPerformance> performances);

enum class BinKind : std::uint8_t { frequency, holding_time };
enum class Pool : std::uint8_t { all, winner, loser };
std::string_view to_string(BinKind k);
std::string_view to_string(Pool p);

// One sample to bin: frequency J, holding time in days, return.
struct Observation {
  double J = 0.0;
  double dt = 0.0;
  double R = 0.0;
};

struct Bin {
  double lo = 0.0;
  double hi = 0.0;
  double center = 0.0;  // geometric mean of the edges
  std::size_t count = 0;
  double mean_R = 0.0;
  double std_R = 0.0;  // sample standard deviation, 0 for count < 2
  double mean_dt = 0.0;
  double mean_J = 0.0;
};

struct BinnedSeries {
  BinKind kind = BinKind::frequency;
  Pool pool = Pool::all;
  std::vector<Bin> bins;  // one per edge interval, empty bins kept
};

struct BinSettings {
  double j_first_edge = 1.0;
  double j_ratio = 2.0;
  int dt_per_decade = 3;
};

// first, first*ratio, ... up to the first edge strictly above max_value.
std::vector<double> geometric_edges(double first_edge, double ratio, double max_value);
// Powers 10^(k/per_decade) bracketing [min_value, max_value]; min_value > 0.
std::vector<double> decade_edges(int per_decade, double min_value, double max_value);
// Edges for `kind` covering the observations' range.
std::vector<double> edges_for(BinKind kind, std::span<const Observation> obs, const BinSettings& settings);

// Half-open bins [edge_k, edge_k+1). Observations outside the edges (and
// non-positive holding times for holding-time bins) are skipped. Returns the
// all, winner and loser series in that order.
std::vector<BinnedSeries> bin_and_average(std::span<const Observation> obs, BinKind kind,
                                          std::span<const double> edges);

enum class Relation : std::uint8_t { return_vs_frequency, return_vs_holding, holding_vs_frequency };
std::string_view exponent_name(Relation r);  // alpha, beta, gamma
std::string_view relation_name(Relation r);  // R~J, R~dt, dt~J
BinKind bin_kind_for(Relation r);

struct FitSettings {
  std::size_t min_count = 10;
  bool weighted = false;  // weights = bin counts
};

struct PowerLawFit {
  Relation relation = Relation::return_vs_frequency;
  bool available = false;
  // Under the relation's sign convention: alpha = -slope, beta = slope, gamma = -slope.
  double exponent = 0.0;
  double std_error = 0.0;
  double slope = 0.0;
  double intercept = 0.0;  // natural-log intercept
  double r2 = 0.0;
  double range_lo = 0.0;
  double range_hi = 0.0;
  std::size_t bins_used = 0;
  std::size_t samples = 0;
  std::vector<std::string> notes;
};

// OLS of log|dependent mean| on log(bin center) over bins with count >= min_count
// and a positive dependent magnitude. Unavailable with fewer than 3 such bins.
PowerLawFit fit_power_law(const BinnedSeries& series, Relation relation, const FitSettings& settings = {});

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

enum class ErrorPropagation : std::uint8_t { quadrature, linear };
enum class Verdict : std::uint8_t { consistent, inconsistent, indeterminate };
std::string_view to_string(Verdict v);

struct ExponentTriple {
  std::optional<Estimate> alpha;
  std::optional<Estimate> beta;
  std::optional<Estimate> gamma;
};

struct ConsistencyReport {
  ExponentTriple triple;
  std::optional<Estimate> beta_gamma;
  double difference = 0.0;  // |alpha - beta gamma|
  double tolerance = 0.0;   // k * sqrt(sigma_alpha^2 + sigma_betagamma^2)
  Verdict verdict = Verdict::indeterminate;
};

// Quadrature: sigma = sqrt((beta sigma_gamma)^2 + (gamma sigma_beta)^2).
// Linear: sigma = |beta| sigma_gamma + |gamma| sigma_beta.
Estimate product_with_error(Estimate beta, Estimate gamma, ErrorPropagation mode = ErrorPropagation::quadrature);
ConsistencyReport check_exponent_relation(const ExponentTriple& triple, double k = 2.0,
                                          ErrorPropagation mode = ErrorPropagation::quadrature);

struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  friend bool operator==(const BoxStats&, const BoxStats&) = default;
};

// Tukey hinges. Throws std::invalid_argument on an empty sample.
BoxStats box_stats(std::span<const double> sample);

struct DailyPrices {
  std::vector<std::int32_t> days;
  std::map<std::string, std::vector<std::optional<double>>> closes;  // parallel to `days`
};

struct OneOverNPoint {
  std::int32_t day = 0;
  double portfolio = 0.0;
  std::optional<double> index;  // normalized to the same starting value
};

struct OneOverNResult {
  std::vector<OneOverNPoint> points;
  double portfolio_return = 0.0;
  std::optional<double> index_return;
  Diagnostics diagnostics;
};

// Equal capital per stock bought at the first day's price and held. Missing
// later prices are carried forward with a diagnostic; a missing first-day
// price throws std::invalid_argument.
OneOverNResult one_over_n_benchmark(const DailyPrices& prices, std::span<const IndexPoint> index,
                                    double capital = 1.0);

// Report writers.
void write_binned_series(std::ostream& out, std::span<const BinnedSeries> series);
void write_box_stats_header(std::ostream& out);
void write_box_stats_row(std::ostream& out, const Cell& cell, const BoxStats& stats, std::size_t count);
void write_fit_header(std::ostream& out);
void write_fit_row(std::ostream& out, const Cell& cell, Pool pool, const PowerLawFit& fit);
void write_consistency_header(std::ostream& out);
void write_consistency_row(std::ostream& out, const Cell& cell, Pool pool, const ConsistencyReport& report);

std::string format_double(double v);

}  // namespace stratscope
