#include "stratscope/spectro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace stratscope {

double Pools::winner_fraction() const {
  return total() == 0 ? 0.0 : static_cast<double>(winners.size()) / static_cast<double>(total());
}

double Pools::loser_fraction() const {
  return total() == 0 ? 0.0 : static_cast<double>(losers.size()) / static_cast<double>(total());
}

std::map<Cell, Pools> classify_investors(std::span<const InvestorPerformance> performances) {
  std::map<Cell, Pools> cells;
  for (std::size_t i = 0; i < performances.size(); ++i) {
    const auto& p = performances[i];
    auto& pools = cells[Cell{p.market, p.investor_class}];
    switch (outcome_of(p.R)) {
      case Outcome::winner: pools.winners.push_back(i); break;
      case Outcome::loser: pools.losers.push_back(i); break;
      case Outcome::flat: pools.flats.push_back(i); break;
    }
  }
  return cells;
}

std::string_view to_string(BinKind k) { return k == BinKind::frequency ? "J" : "dt"; }

std::string_view to_string(Pool p) {
  switch (p) {
    case Pool::all: return "all";
    case Pool::winner: return "winner";
    case Pool::loser: return "loser";
  }
  return "?";
}

std::vector<double> geometric_edges(double first_edge, double ratio, double max_value) {
  if (!(first_edge > 0) || !(ratio > 1)) throw std::invalid_argument("geometric_edges: need first_edge > 0, ratio > 1");
  std::vector<double> edges{first_edge};
  while (edges.back() <= max_value) edges.push_back(edges.back() * ratio);
  if (edges.size() < 2) edges.push_back(first_edge * ratio);
  return edges;
}

std::vector<double> decade_edges(int per_decade, double min_value, double max_value) {
  if (per_decade < 1 || !(min_value > 0) || max_value < min_value)
    throw std::invalid_argument("decade_edges: need per_decade >= 1 and 0 < min <= max");
  auto edge = [per_decade](long k) { return std::pow(10.0, static_cast<double>(k) / per_decade); };
  long k = static_cast<long>(std::floor(std::log10(min_value) * per_decade));
  while (edge(k) > min_value) --k;
  while (edge(k + 1) <= min_value) ++k;
  std::vector<double> edges{edge(k)};
  while (edges.back() <= max_value) edges.push_back(edge(++k));
  return edges;
}

std::vector<double> edges_for(BinKind kind, std::span<const Observation> obs, const BinSettings& settings) {
  if (kind == BinKind::frequency) {
    double hi = settings.j_first_edge;
    for (const auto& o : obs) hi = std::max(hi, o.J);
    return geometric_edges(settings.j_first_edge, settings.j_ratio, hi);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& o : obs)
    if (o.dt > 0) {
      lo = std::min(lo, o.dt);
      hi = std::max(hi, o.dt);
    }
  if (hi == 0.0) return {};
  return decade_edges(settings.dt_per_decade, lo, hi);
}

std::vector<BinnedSeries> bin_and_average(std::span<const Observation> obs, BinKind kind,
                                          std::span<const double> edges) {
  std::vector<BinnedSeries> out;
  const std::size_t nbins = edges.size() < 2 ? 0 : edges.size() - 1;
  for (Pool pool : {Pool::all, Pool::winner, Pool::loser}) {
    BinnedSeries series;
    series.kind = kind;
    series.pool = pool;
    series.bins.resize(nbins);
    for (std::size_t b = 0; b < nbins; ++b) {
      series.bins[b].lo = edges[b];
      series.bins[b].hi = edges[b + 1];
      series.bins[b].center = std::sqrt(edges[b] * edges[b + 1]);
    }
    out.push_back(std::move(series));
  }
  if (nbins == 0) return out;

  // Per-pool membership lists keep a fixed summation order.
  std::vector<std::vector<std::vector<const Observation*>>> members(3, std::vector<std::vector<const Observation*>>(nbins));
  for (const auto& o : obs) {
    double x = kind == BinKind::frequency ? o.J : o.dt;
    if (!(x > 0) || x < edges.front() || x >= edges.back()) continue;
    auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin()) - 1;
    members[0][b].push_back(&o);
    if (o.R > 0) members[1][b].push_back(&o);
    if (o.R < 0) members[2][b].push_back(&o);
  }
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t b = 0; b < nbins; ++b) {
      auto& bin = out[p].bins[b];
      const auto& m = members[p][b];
      bin.count = m.size();
      if (m.empty()) continue;
      double sr = 0, sdt = 0, sj = 0;
      for (const auto* o : m) {
        sr += o->R;
        sdt += o->dt;
        sj += o->J;
      }
      const double n = static_cast<double>(m.size());
      bin.mean_R = sr / n;
      bin.mean_dt = sdt / n;
      bin.mean_J = sj / n;
      if (m.size() > 1) {
        double ss = 0;
        for (const auto* o : m) ss += (o->R - bin.mean_R) * (o->R - bin.mean_R);
        bin.std_R = std::sqrt(ss / (n - 1));
      }
    }
  }
  return out;
}

std::string_view exponent_name(Relation r) {
  switch (r) {
    case Relation::return_vs_frequency: return "alpha";
    case Relation::return_vs_holding: return "beta";
    case Relation::holding_vs_frequency: return "gamma";
  }
  return "?";
}

std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::return_vs_frequency: return "R~J";
    case Relation::return_vs_holding: return "R~dt";
    case Relation::holding_vs_frequency: return "dt~J";
  }
  return "?";
}

BinKind bin_kind_for(Relation r) {
  return r == Relation::return_vs_holding ? BinKind::holding_time : BinKind::frequency;
}

PowerLawFit fit_power_law(const BinnedSeries& series, Relation relation, const FitSettings& settings) {
  PowerLawFit fit;
  fit.relation = relation;
  if (series.kind != bin_kind_for(relation)) throw std::invalid_argument("fit_power_law: series has the wrong bin kind");

  std::vector<double> xs, ys, ws;
  for (const auto& bin : series.bins) {
    if (bin.count == 0 || bin.count < settings.min_count) continue;
    double y = relation == Relation::holding_vs_frequency ? bin.mean_dt : std::abs(bin.mean_R);
    if (!(y > 0)) {
      fit.notes.push_back(fmt::format("bin [{}, {}) excluded: non-positive mean", format_double(bin.lo),
                                      format_double(bin.hi)));
      continue;
    }
    xs.push_back(std::log(bin.center));
    ys.push_back(std::log(y));
    ws.push_back(settings.weighted ? static_cast<double>(bin.count) : 1.0);
    if (fit.bins_used == 0) fit.range_lo = bin.lo;
    fit.range_hi = bin.hi;
    ++fit.bins_used;
    fit.samples += bin.count;
  }
  if (fit.bins_used < 3) {
    fit.notes.push_back(fmt::format("only {} usable bin(s); need 3", fit.bins_used));
    return fit;
  }

  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sw += ws[i];
    sx += ws[i] * xs[i];
    sy += ws[i] * ys[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += ws[i] * (xs[i] - mx) * (xs[i] - mx);
    sxy += ws[i] * (xs[i] - mx) * (ys[i] - my);
    syy += ws[i] * (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0)) {
    fit.notes.push_back("degenerate abscissa");
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ssr += ws[i] * r * r;
  }
  const double dof = static_cast<double>(xs.size()) - 2.0;
  // Weighted least squares; the estimate is invariant to rescaling the weights.
  fit.std_error = std::sqrt((ssr / dof) / sxx);
  fit.r2 = syy > 0 ? 1.0 - ssr / syy : 1.0;
  fit.exponent = relation == Relation::return_vs_holding ? fit.slope : -fit.slope;
  fit.available = true;
  return fit;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::consistent: return "consistent";
    case Verdict::inconsistent: return "inconsistent";
    case Verdict::indeterminate: return "indeterminate";
  }
  return "?";
}

Estimate product_with_error(Estimate beta, Estimate gamma, ErrorPropagation mode) {
  Estimate out;
  out.value = beta.value * gamma.value;
  if (mode == ErrorPropagation::quadrature)
    out.error = std::hypot(beta.value * gamma.error, gamma.value * beta.error);
  else
    out.error = std::abs(beta.value) * gamma.error + std::abs(gamma.value) * beta.error;
  return out;
}

ConsistencyReport check_exponent_relation(const ExponentTriple& triple, double k, ErrorPropagation mode) {
  ConsistencyReport report;
  report.triple = triple;
  if (triple.beta && triple.gamma) report.beta_gamma = product_with_error(*triple.beta, *triple.gamma, mode);
  if (!triple.alpha || !report.beta_gamma) return report;
  report.difference = std::abs(triple.alpha->value - report.beta_gamma->value);
  report.tolerance = k * std::hypot(triple.alpha->error, report.beta_gamma->error);
  report.verdict = report.difference <= report.tolerance ? Verdict::consistent : Verdict::inconsistent;
  return report;
}

namespace {
double median_of_sorted(std::span<const double> s) {
  const std::size_t n = s.size();
  return n % 2 == 1 ? s[n / 2] : (s[n / 2 - 1] + s[n / 2]) / 2.0;
}
}  // namespace

BoxStats box_stats(std::span<const double> sample) {
  if (sample.empty()) throw std::invalid_argument("box_stats: empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const std::size_t half = (n + 1) / 2;  // halves share the median element when n is odd
  std::span<const double> all(s);
  return BoxStats{s.front(), median_of_sorted(all.first(half)), median_of_sorted(all), median_of_sorted(all.last(half)),
                  s.back()};
}

OneOverNResult one_over_n_benchmark(const DailyPrices& prices, std::span<const IndexPoint> index, double capital) {
  OneOverNResult result;
  if (prices.days.empty() || prices.closes.empty()) throw std::invalid_argument("one_over_n_benchmark: no prices");
  const double n = static_cast<double>(prices.closes.size());
  std::map<std::string, double> shares;
  std::map<std::string, double> last;
  for (const auto& [stock, closes] : prices.closes) {
    if (closes.size() != prices.days.size()) throw std::invalid_argument("one_over_n_benchmark: ragged price table");
    if (!closes.front() || !(*closes.front() > 0))
      throw std::invalid_argument(fmt::format("one_over_n_benchmark: {} has no first-day price", stock));
    shares[stock] = capital / n / *closes.front();
    last[stock] = *closes.front();
  }

  std::map<std::int32_t, double> index_by_day;
  for (const auto& p : index) index_by_day[p.day] = p.level;
  std::optional<double> index_base;
  if (auto it = index_by_day.find(prices.days.front()); it != index_by_day.end()) index_base = it->second;
  else if (!index.empty())
    result.diagnostics.push_back({Severity::warning, "spectro", 0, "index series has no level on the first day"});

  for (std::size_t d = 0; d < prices.days.size(); ++d) {
    OneOverNPoint pt;
    pt.day = prices.days[d];
    for (const auto& [stock, closes] : prices.closes) {
      if (closes[d]) {
        last[stock] = *closes[d];
      } else {
        result.diagnostics.push_back({Severity::warning, "spectro", 0,
                                      fmt::format("{} {}: missing price carried forward", stock, format_date(pt.day))});
      }
      pt.portfolio += shares[stock] * last[stock];
    }
    if (index_base) {
      if (auto it = index_by_day.find(pt.day); it != index_by_day.end()) pt.index = capital * it->second / *index_base;
    }
    result.points.push_back(pt);
  }
  result.portfolio_return = result.points.back().portfolio / capital - 1.0;
  if (index_base) {
    for (auto it = result.points.rbegin(); it != result.points.rend(); ++it)
      if (it->index) {
        result.index_return = *it->index / capital - 1.0;
        break;
      }
  }
  return result;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (v == 0.0) return "0";  // folds -0
  return fmt::format("{:.12g}", v);
}

void write_binned_series(std::ostream& out, std::span<const BinnedSeries> series) {
  out << "bin_kind,pool,bin_lo,bin_hi,bin_center,count,mean_R,std_R,mean_dt,mean_J\n";
  for (const auto& s : series)
    for (const auto& b : s.bins)
      out << to_string(s.kind) << ',' << to_string(s.pool) << ',' << format_double(b.lo) << ',' << format_double(b.hi)
          << ',' << format_double(b.center) << ',' << b.count << ',' << format_double(b.mean_R) << ','
          << format_double(b.std_R) << ',' << format_double(b.mean_dt) << ',' << format_double(b.mean_J) << '\n';
}

void write_box_stats_header(std::ostream& out) { out << "market,class,count,min,q1,median,q3,max\n"; }

void write_box_stats_row(std::ostream& out, const Cell& cell, const BoxStats& s, std::size_t count) {
  out << to_string(cell.market) << ',' << to_string(cell.investor_class) << ',' << count << ',' << format_double(s.min)
      << ',' << format_double(s.q1) << ',' << format_double(s.median) << ',' << format_double(s.q3) << ','
      << format_double(s.max) << '\n';
}

void write_fit_header(std::ostream& out) { out << "market,class,pool,exponent,name,value,stderr,r2,bins_used\n"; }

void write_fit_row(std::ostream& out, const Cell& cell, Pool pool, const PowerLawFit& fit) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out << to_string(cell.market) << ',' << to_string(cell.investor_class) << ',' << to_string(pool) << ','
      << exponent_name(fit.relation) << ',' << relation_name(fit.relation) << ','
      << format_double(fit.available ? fit.exponent : nan) << ',' << format_double(fit.available ? fit.std_error : nan)
      << ',' << format_double(fit.available ? fit.r2 : nan) << ',' << fit.bins_used << '\n';
}

void write_consistency_header(std::ostream& out) {
  out << "market,class,pool,alpha,beta,gamma,beta_gamma,sigma,verdict\n";
}

void write_consistency_row(std::ostream& out, const Cell& cell, Pool pool, const ConsistencyReport& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto v = [&](const std::optional<Estimate>& e) { return format_double(e ? e->value : nan); };
  out << to_string(cell.market) << ',' << to_string(cell.investor_class) << ',' << to_string(pool) << ','
      << v(r.triple.alpha) << ',' << v(r.triple.beta) << ',' << v(r.triple.gamma) << ',' << v(r.beta_gamma) << ','
      << format_double(r.beta_gamma ? r.beta_gamma->error : nan) << ',' << to_string(r.verdict) << '\n';
}

}  // namespace stratscope
