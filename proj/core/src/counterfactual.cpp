#include "stratscope/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "stratscope/parallel.hpp"

namespace stratscope {

namespace {
constexpr std::string_view kSource = "counterfactual";
constexpr int kStrictAttempts = 1000;
}  // namespace

Price TradeTape::price_at(Timestamp t) const {
  auto it = std::lower_bound(points.begin(), points.end(), t,
                             [](const TapePoint& p, const Timestamp& x) { return p.time < x; });
  if (it == points.end() || it->time != t)
    throw std::out_of_range(fmt::format("{}: no trade at {}", stock_id, format_timestamp(t)));
  return it->price;
}

TapeTable build_tapes(std::span<const Fill> fills, const std::map<std::string, Price>& period_end) {
  TapeTable tapes;
  for (const auto& f : fills) {
    auto close = period_end.find(f.stock_id);
    if (close == period_end.end()) continue;
    auto& tape = tapes[f.stock_id];
    if (tape.points.empty()) {
      tape.stock_id = f.stock_id;
      tape.period_end_price = close->second;
    }
    if (!tape.points.empty() && tape.points.back().time == f.time)
      tape.points.back().price = f.price;
    else if (tape.points.empty() || tape.points.back().time < f.time)
      tape.points.push_back({f.time, f.price});
    else
      throw std::invalid_argument("build_tapes: fills not in time order");
  }
  return tapes;
}

std::vector<std::size_t> sample_tape_indices(std::size_t count, std::size_t tape_size, SplitMix64& rng) {
  if (count > tape_size)
    throw InsufficientTape(fmt::format("insufficient tape: need {} distinct times, tape has {}", count, tape_size));
  std::vector<std::size_t> picked;
  picked.reserve(count);
  if (count * 2 > tape_size) {
    // Dense draw: partial Fisher-Yates over the full index range.
    std::vector<std::size_t> all(tape_size);
    for (std::size_t i = 0; i < tape_size; ++i) all[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      auto j = i + static_cast<std::size_t>(uniform_below(rng, tape_size - i));
      std::swap(all[i], all[j]);
    }
    picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    // Floyd's algorithm.
    for (std::size_t j = tape_size - count; j < tape_size; ++j) {
      auto t = static_cast<std::size_t>(uniform_below(rng, j + 1));
      if (std::find(picked.begin(), picked.end(), t) == picked.end())
        picked.push_back(t);
      else
        picked.push_back(j);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<Timestamp> sample_random_times(std::size_t count, const TradeTape& tape, SplitMix64& rng) {
  auto idx = sample_tape_indices(count, tape.points.size(), rng);
  std::vector<Timestamp> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(tape.points[i].time);
  return out;
}

ActivitySequence reprice(const ActivitySequence& seq, std::span<const Timestamp> new_times, const TradeTape& tape) {
  ActivitySequence out{seq.investor_id, seq.stock_id, {}};
  out.entries.reserve(seq.entries.size());
  std::size_t k = 0;
  for (const auto& e : seq.entries) {
    Entry r = e;
    if (!e.virtual_close) {
      if (k >= new_times.size()) throw std::invalid_argument("reprice: fewer times than entries");
      r.time = new_times[k];
      r.sequence = k;
      r.notional = tape.price_at(r.time) * e.shares();
      ++k;
    }
    out.entries.push_back(r);
  }
  if (k != new_times.size()) throw std::invalid_argument("reprice: more times than entries");
  return out;
}

ReplicaResult reprice_and_evaluate(const InvestorBook& book, std::span<const std::vector<Timestamp>> new_times,
                                   const TapeTable& tapes, const FeeSchedule& schedule, const DividendTable& dividends,
                                   const LedgerOptions& options) {
  if (new_times.size() != book.sequences.size()) throw std::invalid_argument("reprice_and_evaluate: one time list per stock");
  InvestorBook replica;
  replica.investor_id = book.investor_id;
  replica.investor_class = book.investor_class;
  replica.market = book.market;
  replica.sequences.reserve(book.sequences.size());
  for (std::size_t k = 0; k < book.sequences.size(); ++k)
    replica.sequences.push_back(reprice(book.sequences[k], new_times[k], tapes.at(book.sequences[k].stock_id)));
  auto ev = evaluate_investor(replica, schedule, dividends, options);
  ReplicaResult r;
  r.R = ev.R.value_or(0.0);
  r.J = ev.J;
  r.dt_days = ev.holding.mean_days();
  r.label = outcome_of(r.R);
  return r;
}

namespace {

std::size_t real_entries(const ActivitySequence& seq) {
  std::size_t n = 0;
  for (const auto& e : seq.entries)
    if (!e.virtual_close) ++n;
  return n;
}

bool prefix_non_negative(const ActivitySequence& seq) {
  std::int64_t held = 0;
  for (const auto& e : seq.entries) {
    held -= e.volume;
    if (held < 0) return false;
  }
  return true;
}

}  // namespace

ReplicaResult run_replica(const InvestorBook& book, std::uint32_t investor_index, std::uint32_t replica,
                          const TapeTable& tapes, const FeeSchedule& schedule, const DividendTable& dividends,
                          const CounterfactualSettings& settings) {
  const auto investor_key = stable_hash(book.investor_id);
  std::vector<std::vector<Timestamp>> times(book.sequences.size());
  for (std::size_t k = 0; k < book.sequences.size(); ++k) {
    const auto& seq = book.sequences[k];
    const auto& tape = tapes.at(seq.stock_id);
    SplitMix64 rng(derive_seed(settings.seed, investor_key, stable_hash(seq.stock_id), replica));
    times[k] = sample_random_times(real_entries(seq), tape, rng);
    if (settings.strict_position_mode) {
      int attempts = 1;
      while (!prefix_non_negative(reprice(seq, times[k], tape))) {
        if (++attempts > kStrictAttempts)
          throw std::runtime_error(fmt::format("strict mode: no non-negative draw for {} / {}", book.investor_id,
                                               seq.stock_id));
        times[k] = sample_random_times(real_entries(seq), tape, rng);
      }
    }
  }
  auto r = reprice_and_evaluate(book, times, tapes, schedule, dividends, settings.ledger);
  r.investor = investor_index;
  r.replica = replica;
  return r;
}

std::vector<ReplicaResult> MonteCarloResult::pooled() const {
  std::vector<ReplicaResult> out;
  std::size_t n = 0;
  for (const auto& v : replicas) n += v.size();
  out.reserve(n);
  for (const auto& v : replicas) out.insert(out.end(), v.begin(), v.end());
  return out;
}

Diagnostics run_monte_carlo_streaming(std::span<const InvestorBook> books, const TapeTable& tapes,
                                      const FeeSchedules& fees, const DividendTable& dividends,
                                      const CounterfactualSettings& settings, const ReplicaSink& sink) {
  Diagnostics diagnostics;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < books.size(); ++i) {
    std::string reason;
    for (const auto& seq : books[i].sequences) {
      auto it = tapes.find(seq.stock_id);
      if (it == tapes.end())
        reason = fmt::format("no trade tape for {}", seq.stock_id);
      else if (it->second.points.size() < real_entries(seq))
        reason = fmt::format("insufficient tape for {} ({} < {})", seq.stock_id, it->second.points.size(),
                             real_entries(seq));
      if (!reason.empty()) break;
    }
    if (reason.empty())
      eligible.push_back(i);
    else
      diagnostics.push_back({Severity::warning, std::string(kSource), 0,
                             fmt::format("investor {} skipped: {}", books[i].investor_id, reason)});
  }

  // Chunks bound memory; each chunk is computed in parallel and handed to the
  // sink in index order.
  const std::size_t chunk = std::max<std::size_t>(64, settings.workers * 16);
  std::vector<std::vector<ReplicaResult>> buffer;
  for (std::size_t start = 0; start < eligible.size(); start += chunk) {
    const std::size_t n = std::min(chunk, eligible.size() - start);
    buffer.assign(n, {});
    parallel_for(n, settings.workers, [&](std::size_t k) {
      const auto i = eligible[start + k];
      const auto& book = books[i];
      const auto& schedule = fees.for_market(book.market);
      auto& out = buffer[k];
      out.reserve(settings.replicas);
      for (std::size_t r = 0; r < settings.replicas; ++r)
        out.push_back(run_replica(book, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(r), tapes, schedule,
                                  dividends, settings));
    });
    for (std::size_t k = 0; k < n; ++k) sink(eligible[start + k], buffer[k]);
  }
  return diagnostics;
}

MonteCarloResult run_monte_carlo(std::span<const InvestorBook> books, const TapeTable& tapes, const FeeSchedules& fees,
                                 const DividendTable& dividends, const CounterfactualSettings& settings) {
  MonteCarloResult result;
  result.replicas.resize(books.size());
  result.diagnostics = run_monte_carlo_streaming(
      books, tapes, fees, dividends, settings, [&](std::size_t i, std::span<const ReplicaResult> r) {
        result.replicas[i].assign(r.begin(), r.end());
      });
  return result;
}

ReplicaBinner::ReplicaBinner(BinKind kind, const BinSettings& settings) : kind_(kind), settings_(settings) {
  if (!(settings.j_first_edge > 0) || !(settings.j_ratio > 1) || settings.dt_per_decade < 1)
    throw std::invalid_argument("ReplicaBinner: bad bin settings");
}

double ReplicaBinner::edge(long k) const {
  if (kind_ == BinKind::holding_time) return std::pow(10.0, static_cast<double>(k) / settings_.dt_per_decade);
  double e = settings_.j_first_edge;  // repeated products, as geometric_edges builds them
  for (long i = 0; i < k; ++i) e *= settings_.j_ratio;
  return e;
}

std::optional<long> ReplicaBinner::index_of(const ReplicaResult& r) const {
  if (kind_ == BinKind::frequency) {
    const double x = static_cast<double>(r.J);
    if (x < settings_.j_first_edge) return std::nullopt;
    long k = 0;
    double hi = settings_.j_first_edge * settings_.j_ratio;
    while (hi <= x) {
      hi *= settings_.j_ratio;
      ++k;
    }
    return k;
  }
  const double x = r.dt_days;
  if (!(x > 0)) return std::nullopt;
  long k = static_cast<long>(std::floor(std::log10(x) * settings_.dt_per_decade));
  while (edge(k) > x) --k;
  while (edge(k + 1) <= x) ++k;
  return k;
}

void ReplicaBinner::add(const ReplicaResult& r) {
  auto k = index_of(r);
  if (!k) return;
  auto& slot = bins_[*k];
  auto push = [&](Acc& a) {
    ++a.count;
    const double d = r.R - a.mean;
    a.mean += d / static_cast<double>(a.count);
    a.m2 += d * (r.R - a.mean);
    a.sum_dt += r.dt_days;
    a.sum_J += static_cast<double>(r.J);
  };
  push(slot[0]);
  if (r.R > 0) push(slot[1]);
  if (r.R < 0) push(slot[2]);
}

std::vector<BinnedSeries> ReplicaBinner::finish() const {
  std::vector<BinnedSeries> out;
  const Pool pools[] = {Pool::all, Pool::winner, Pool::loser};
  for (std::size_t p = 0; p < 3; ++p) {
    BinnedSeries s;
    s.kind = kind_;
    s.pool = pools[p];
    if (!bins_.empty()) {
      const long first = kind_ == BinKind::frequency ? 0 : bins_.begin()->first;
      const long last = bins_.rbegin()->first;
      for (long k = first; k <= last; ++k) {
        Bin b;
        b.lo = edge(k);
        b.hi = edge(k + 1);
        b.center = std::sqrt(b.lo * b.hi);
        if (auto it = bins_.find(k); it != bins_.end() && it->second[p].count > 0) {
          const auto& a = it->second[p];
          const double n = static_cast<double>(a.count);
          b.count = a.count;
          b.mean_R = a.mean;
          b.std_R = a.count > 1 ? std::sqrt(a.m2 / (n - 1)) : 0.0;
          b.mean_dt = a.sum_dt / n;
          b.mean_J = a.sum_J / n;
        }
        s.bins.push_back(b);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<BinnedSeries> summarize_replicas(std::span<const ReplicaResult> results, BinKind kind,
                                             std::span<const double> edges) {
  std::vector<Observation> obs;
  obs.reserve(results.size());
  for (const auto& r : results) obs.push_back({static_cast<double>(r.J), r.dt_days, r.R});
  return bin_and_average(obs, kind, edges);
}

void write_replica_summary(std::ostream& out, std::span<const BinnedSeries> series) {
  out << "bin_kind,bin_center,pool,mean_R,std_R,count\n";
  for (const auto& s : series)
    for (const auto& b : s.bins)
      out << to_string(s.kind) << ',' << format_double(b.center) << ',' << to_string(s.pool) << ','
          << format_double(b.mean_R) << ',' << format_double(b.std_R) << ',' << b.count << '\n';
}

}  // namespace stratscope
