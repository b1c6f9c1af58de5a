#include "stratscope/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "csv.hpp"
#include "stratscope/matching.hpp"

namespace stratscope {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

namespace {

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(fmt::format("expected a boolean, got '{}'", v));
}

template <class Int>
Int parse_int(std::string_view v) {
  Int out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(fmt::format("expected an integer, got '{}'", v));
  return out;
}

double parse_real(std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(fmt::format("expected a number, got '{}'", v));
  return out;
}

std::string fmt_real(double v) { return fmt::format("{}", v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

using Setter = std::function<void(std::string_view)>;
using SectionKeys = std::map<std::string, Setter, std::less<>>;

SectionKeys fee_keys(FeeSchedule& f) {
  return {
      {"brokerage", [&f](std::string_view v) { f.brokerage = parse_rate(v); }},
      {"brokerage_individual", [&f](std::string_view v) { f.brokerage_individual = parse_rate(v); }},
      {"brokerage_institution", [&f](std::string_view v) { f.brokerage_institution = parse_rate(v); }},
      {"exchange", [&f](std::string_view v) { f.exchange = parse_rate(v); }},
      {"supervision", [&f](std::string_view v) { f.supervision = parse_rate(v); }},
      {"stamp_duty", [&f](std::string_view v) { f.stamp_duty = parse_rate(v); }},
      {"minimum_fee", [&f](std::string_view v) { f.minimum_fee = parse_money(v); }},
  };
}

SectionKeys synth_keys(PopulationSpec& s) {
  auto size = [](std::size_t& dst) { return [&dst](std::string_view v) { dst = parse_int<std::size_t>(v); }; };
  auto real = [](double& dst) { return [&dst](std::string_view v) { dst = parse_real(v); }; };
  auto i64 = [](std::int64_t& dst) { return [&dst](std::string_view v) { dst = parse_int<std::int64_t>(v); }; };
  return {
      {"individuals_a", size(s.individuals_a)},
      {"institutions_a", size(s.institutions_a)},
      {"individuals_b", size(s.individuals_b)},
      {"institutions_b", size(s.institutions_b)},
      {"stocks_a", size(s.stocks_a)},
      {"stocks_b", size(s.stocks_b)},
      {"days", size(s.days)},
      {"first_day", [&s](std::string_view v) { s.first_day = parse_date(v); }},
      {"frequency",
       [&s](std::string_view v) {
         if (v == "power_law")
           s.frequency.kind = FrequencyDistribution::Kind::power_law;
         else if (v == "constant")
           s.frequency.kind = FrequencyDistribution::Kind::constant;
         else
           throw ConfigError(fmt::format("frequency must be power_law or constant, got '{}'", v));
       }},
      {"frequency_exponent", real(s.frequency.exponent)},
      {"frequency_min", i64(s.frequency.min)},
      {"frequency_cap", i64(s.frequency.cap)},
      {"frequency_constant", i64(s.frequency.constant)},
      {"max_stocks_per_agent", size(s.max_stocks_per_agent)},
      {"size_log_mean", real(s.size_log_mean)},
      {"size_log_sd", real(s.size_log_sd)},
      {"institution_size_factor", real(s.institution_size_factor)},
      {"lot", i64(s.lot)},
      {"market_order_probability", real(s.market_order_probability)},
      {"sell_probability", real(s.sell_probability)},
      {"price_band", real(s.price_band)},
      {"price_low_a", real(s.price_low_a)},
      {"price_high_a", real(s.price_high_a)},
      {"price_low_b", real(s.price_low_b)},
      {"price_high_b", real(s.price_high_b)},
      {"budget_constrained", [&s](std::string_view v) { s.budget_constrained = parse_bool(v); }},
      {"budget", real(s.budget)},
  };
}

fs::path resolve(const fs::path& base, std::string_view v) {
  fs::path p{std::string(v)};
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  {
    std::istringstream in{std::string(text)};
    try {
      pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
    }
  }

  PipelineConfig c;
  InputPaths input;
  PopulationSpec spec;
  bool have_input = false, have_synth = false;

  std::map<std::string, SectionKeys, std::less<>> sections;
  sections["run"] = {{"seed", [&](std::string_view v) { c.seed = parse_int<std::uint64_t>(v); }}};
  sections["input"] = {
      {"orders", [&](std::string_view v) { input.orders = resolve(base_dir, v); }},
      {"calendar", [&](std::string_view v) { input.calendar = resolve(base_dir, v); }},
      {"stocks", [&](std::string_view v) { input.stocks = resolve(base_dir, v); }},
      {"dividends", [&](std::string_view v) { input.dividends = resolve(base_dir, v); }},
      {"index", [&](std::string_view v) { input.index = resolve(base_dir, v); }},
      {"resort", [&](std::string_view v) { input.resort = parse_bool(v); }},
  };
  sections["synth"] = synth_keys(spec);
  sections["fees.A"] = fee_keys(c.fees.a);
  sections["fees.B"] = fee_keys(c.fees.b);
  sections["ledger"] = {
      {"virtual_close_costs", [&](std::string_view v) { c.ledger.virtual_close_costs = parse_bool(v); }},
      {"count_virtual", [&](std::string_view v) { c.ledger.count_virtual = parse_bool(v); }},
  };
  sections["counterfactual"] = {
      {"replicas", [&](std::string_view v) { c.replicas = parse_int<std::size_t>(v); }},
      {"strict_position_mode", [&](std::string_view v) { c.strict_position_mode = parse_bool(v); }},
  };
  sections["binning"] = {
      {"j_first_edge", [&](std::string_view v) { c.binning.j_first_edge = parse_real(v); }},
      {"j_ratio", [&](std::string_view v) { c.binning.j_ratio = parse_real(v); }},
      {"dt_per_decade", [&](std::string_view v) { c.binning.dt_per_decade = parse_int<int>(v); }},
  };
  sections["fit"] = {
      {"min_count", [&](std::string_view v) { c.fit.min_count = parse_int<std::size_t>(v); }},
      {"weighted", [&](std::string_view v) { c.fit.weighted = parse_bool(v); }},
      {"k", [&](std::string_view v) { c.k = parse_real(v); }},
      {"propagation",
       [&](std::string_view v) {
         if (v == "quadrature")
           c.propagation = ErrorPropagation::quadrature;
         else if (v == "linear")
           c.propagation = ErrorPropagation::linear;
         else
           throw ConfigError(fmt::format("propagation must be quadrature or linear, got '{}'", v));
       }},
  };
  sections["output"] = {{"dir", [&](std::string_view v) { c.output_dir = resolve(base_dir, v); }}};

  // The INI reader drops sections without keys, but an empty [synth] is a
  // valid "all defaults" request, so section headers are scanned directly.
  {
    std::istringstream lines{std::string(text)};
    std::string line;
    while (std::getline(lines, line)) {
      auto t = csv::trim(line);
      if (t.size() < 2 || t.front() != '[' || t.back() != ']') continue;
      auto name = csv::trim(t.substr(1, t.size() - 2));
      if (!sections.contains(name)) throw ConfigError(fmt::format("unknown section [{}]", name));
      have_input |= name == "input";
      have_synth |= name == "synth";
    }
  }

  for (const auto& [name, section] : tree) {
    if (section.empty() && !section.data().empty())
      throw ConfigError(fmt::format("key '{}' outside any section", name));
    auto sec = sections.find(name);
    if (sec == sections.end()) throw ConfigError(fmt::format("unknown section [{}]", name));
    for (const auto& [key, value] : section) {
      auto setter = sec->second.find(key);
      if (setter == sec->second.end()) throw ConfigError(fmt::format("unknown key '{}' in [{}]", key, name));
      std::string_view raw = value.data();
      if (auto semi = raw.find(';'); semi != std::string_view::npos) raw = raw.substr(0, semi);  // inline comment
      raw = csv::trim(raw);
      try {
        setter->second(raw);
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("[{}] {}: {}", name, key, e.what()));
      } catch (const std::exception& e) {
        throw ConfigError(fmt::format("[{}] {}: {}", name, key, e.what()));
      }
    }
  }

  if (have_input && have_synth) throw ConfigError("config has both [input] and [synth]; exactly one is allowed");
  if (!have_input && !have_synth) throw ConfigError("config needs an [input] or a [synth] section");
  if (have_input) {
    if (input.orders.empty() || input.calendar.empty() || input.stocks.empty())
      throw ConfigError("[input] needs orders, calendar and stocks");
    c.input = input;
  } else {
    spec.validate();
    c.synth = spec;
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

void validate_config(const PipelineConfig& c) {
  if (c.input.has_value() == c.synth.has_value()) throw ConfigError("exactly one of input paths and synth spec is required");
  if (c.input) {
    auto check = [](const fs::path& p, std::string_view what) {
      if (!fs::is_regular_file(p)) throw ConfigError(fmt::format("{} file not found: {}", what, p.string()));
    };
    check(c.input->orders, "orders");
    check(c.input->calendar, "calendar");
    check(c.input->stocks, "stocks");
    if (c.input->dividends) check(*c.input->dividends, "dividends");
    if (c.input->index) check(*c.input->index, "index");
  }
  if (c.synth) c.synth->validate();
  c.fees.a.validate();
  c.fees.b.validate();
  if (c.replicas == 0) throw ConfigError("counterfactual replicas must be >= 1");
  if (!(c.binning.j_first_edge > 0) || !(c.binning.j_ratio > 1) || c.binning.dt_per_decade < 1)
    throw ConfigError("binning needs j_first_edge > 0, j_ratio > 1, dt_per_decade >= 1");
  if (c.fit.min_count < 1) throw ConfigError("fit min_count must be >= 1");
  if (!(c.k > 0)) throw ConfigError("fit k must be positive");
  if (c.output_dir.empty()) throw ConfigError("output dir is empty");
}

namespace {

void emit_fees(std::ostream& o, std::string_view name, const FeeSchedule& f) {
  o << "\n[" << name << "]\n";
  o << "brokerage = " << format_rate(f.brokerage) << '\n';
  if (f.brokerage_individual) o << "brokerage_individual = " << format_rate(*f.brokerage_individual) << '\n';
  if (f.brokerage_institution) o << "brokerage_institution = " << format_rate(*f.brokerage_institution) << '\n';
  o << "exchange = " << format_rate(f.exchange) << '\n';
  o << "supervision = " << format_rate(f.supervision) << '\n';
  o << "stamp_duty = " << format_rate(f.stamp_duty) << '\n';
  o << "minimum_fee = " << format_money(f.minimum_fee) << '\n';
}

void emit_synth(std::ostream& o, const PopulationSpec& s) {
  o << "\n[synth]\n";
  o << "individuals_a = " << s.individuals_a << '\n';
  o << "institutions_a = " << s.institutions_a << '\n';
  o << "individuals_b = " << s.individuals_b << '\n';
  o << "institutions_b = " << s.institutions_b << '\n';
  o << "stocks_a = " << s.stocks_a << '\n';
  o << "stocks_b = " << s.stocks_b << '\n';
  o << "days = " << s.days << '\n';
  o << "first_day = " << format_date(s.first_day) << '\n';
  o << "frequency = " << (s.frequency.kind == FrequencyDistribution::Kind::power_law ? "power_law" : "constant") << '\n';
  o << "frequency_exponent = " << fmt_real(s.frequency.exponent) << '\n';
  o << "frequency_min = " << s.frequency.min << '\n';
  o << "frequency_cap = " << s.frequency.cap << '\n';
  o << "frequency_constant = " << s.frequency.constant << '\n';
  o << "max_stocks_per_agent = " << s.max_stocks_per_agent << '\n';
  o << "size_log_mean = " << fmt_real(s.size_log_mean) << '\n';
  o << "size_log_sd = " << fmt_real(s.size_log_sd) << '\n';
  o << "institution_size_factor = " << fmt_real(s.institution_size_factor) << '\n';
  o << "lot = " << s.lot << '\n';
  o << "market_order_probability = " << fmt_real(s.market_order_probability) << '\n';
  o << "sell_probability = " << fmt_real(s.sell_probability) << '\n';
  o << "price_band = " << fmt_real(s.price_band) << '\n';
  o << "price_low_a = " << fmt_real(s.price_low_a) << '\n';
  o << "price_high_a = " << fmt_real(s.price_high_a) << '\n';
  o << "price_low_b = " << fmt_real(s.price_low_b) << '\n';
  o << "price_high_b = " << fmt_real(s.price_high_b) << '\n';
  o << "budget_constrained = " << fmt_bool(s.budget_constrained) << '\n';
  o << "budget = " << fmt_real(s.budget) << '\n';
}

}  // namespace

std::string canonical_config(const PipelineConfig& c) {
  std::ostringstream o;
  o << "[run]\nseed = " << c.seed << '\n';
  if (c.input) {
    o << "\n[input]\n";
    o << "orders = " << c.input->orders.string() << '\n';
    o << "calendar = " << c.input->calendar.string() << '\n';
    o << "stocks = " << c.input->stocks.string() << '\n';
    if (c.input->dividends) o << "dividends = " << c.input->dividends->string() << '\n';
    if (c.input->index) o << "index = " << c.input->index->string() << '\n';
    o << "resort = " << fmt_bool(c.input->resort) << '\n';
  }
  if (c.synth) emit_synth(o, *c.synth);
  emit_fees(o, "fees.A", c.fees.a);
  emit_fees(o, "fees.B", c.fees.b);
  o << "\n[ledger]\nvirtual_close_costs = " << fmt_bool(c.ledger.virtual_close_costs)
    << "\ncount_virtual = " << fmt_bool(c.ledger.count_virtual) << '\n';
  o << "\n[counterfactual]\nreplicas = " << c.replicas
    << "\nstrict_position_mode = " << fmt_bool(c.strict_position_mode) << '\n';
  o << "\n[binning]\nj_first_edge = " << fmt_real(c.binning.j_first_edge) << "\nj_ratio = " << fmt_real(c.binning.j_ratio)
    << "\ndt_per_decade = " << c.binning.dt_per_decade << '\n';
  o << "\n[fit]\nmin_count = " << c.fit.min_count << "\nweighted = " << fmt_bool(c.fit.weighted)
    << "\nk = " << fmt_real(c.k)
    << "\npropagation = " << (c.propagation == ErrorPropagation::quadrature ? "quadrature" : "linear") << '\n';
  return o.str();
}

std::string config_template() {
  return R"(; stratscope pipeline configuration.
; Lines starting with ';' are comments. Values shown are the defaults.
; Exactly one of [input] or [synth] must be present.

[run]
; Master seed for synthetic data and the counterfactual replicas (--seed overrides).
seed = 42

; Recorded order flow. Relative paths resolve against this file's directory.
;[input]
;orders = orders.csv        ; trader_id,class,stock,side,kind,price,size,cancel_target,timestamp,order_id
;calendar = calendar.csv    ; date column, optional session-time overrides
;stocks = stocks.csv        ; stock,market,previous_close,period_end_price
;dividends = dividends.csv  ; optional: stock,ex_date,cash_per_share
;index = index.csv          ; optional: date,level[,market]
;resort = false             ; sort out-of-order rows instead of rejecting the file

; Zero-intelligence synthetic population.
[synth]
individuals_a = 7000
institutions_a = 1000
individuals_b = 1600
institutions_b = 400
stocks_a = 32
stocks_b = 11
days = 20
first_day = 2003-01-02
frequency = power_law         ; or constant
frequency_exponent = 2.5
frequency_min = 2
frequency_cap = 1000
frequency_constant = 4
max_stocks_per_agent = 4
size_log_mean = 1.5           ; lots, log scale
size_log_sd = 1
institution_size_factor = 5
lot = 100
market_order_probability = 0.1
sell_probability = 0.6
price_band = 0.05             ; limit offset around the last trade
price_low_a = 5
price_high_a = 30
price_low_b = 0.5
price_high_b = 5
budget_constrained = false
budget = 1000000

[fees.A]
brokerage = 0.15%
;brokerage_individual = 0.15%
;brokerage_institution = 0.1%
exchange = 0.01475%
supervision = 0.004%
stamp_duty = 0.1%
minimum_fee = 5

[fees.B]
brokerage = 0.15%
exchange = 0.0301%
supervision = 0.004%
stamp_duty = 0.1%
minimum_fee = 5

[ledger]
virtual_close_costs = true    ; charge costs on the period-end close-out
count_virtual = true          ; the close-out counts towards J

[counterfactual]
replicas = 2000
strict_position_mode = false

[binning]
j_first_edge = 1
j_ratio = 2
dt_per_decade = 3

[fit]
min_count = 10
weighted = false
k = 2
propagation = quadrature      ; or linear

[output]
dir = stratscope-out
)";
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::synth: return "synth";
    case Stage::replay: return "replay";
    case Stage::analyze: return "analyze";
    case Stage::counterfactual: return "counterfactual";
    case Stage::run: return "run";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Report bundle

namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string out;
  for (unsigned i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

struct StagedDiagnostic {
  std::string stage;
  Diagnostic diagnostic;
};

// Files are assembled in memory and only touch the disk on commit.
class Bundle {
 public:
  void put(std::string name, std::string content) { files_[std::move(name)] = std::move(content); }
  const std::map<std::string, std::string>& files() const { return files_; }

  void commit(const fs::path& out_dir) const {
    fs::path staging = out_dir;
    staging += ".staging";
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
      fs::create_directories(staging);
      for (const auto& [name, content] : files_) {
        std::ofstream f(staging / name, std::ios::binary);
        f << content;
        if (!f) throw std::runtime_error(fmt::format("cannot write {}", (staging / name).string()));
      }
      fs::create_directories(out_dir);
      for (const auto& [name, content] : files_) fs::rename(staging / name, out_dir / name);
      fs::remove_all(staging);
    } catch (...) {
      fs::remove_all(staging, ec);
      throw;
    }
  }

 private:
  std::map<std::string, std::string> files_;
};

std::string cell_tag(const Cell& c) { return fmt::format("{}_{}", to_string(c.market), to_string(c.investor_class)); }

template <class Fn>
auto in_stage(std::string_view stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(std::string(stage), e.what());
  }
}

void add_diagnostics(std::vector<StagedDiagnostic>& sink, std::string_view stage, const Diagnostics& ds) {
  for (const auto& d : ds) sink.push_back({std::string(stage), d});
}

std::string severity_name(Severity s) {
  switch (s) {
    case Severity::info: return "info";
    case Severity::warning: return "warning";
    case Severity::error: return "error";
  }
  return "?";
}

std::string diagnostics_csv(const std::vector<StagedDiagnostic>& ds) {
  std::ostringstream o;
  o << "stage,severity,source,line,message\n";
  for (const auto& [stage, d] : ds)
    o << stage << ',' << severity_name(d.severity) << ',' << csv_field(d.source) << ',' << d.line << ','
      << csv_field(d.message) << '\n';
  return o.str();
}

struct Corpus {
  std::vector<OrderEvent> events;
  TradingCalendar calendar;
  StockTable stocks;
  std::vector<DividendEvent> dividends;
  IndexSeries index;
  std::optional<GroundTruth> truth;
};

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", p.string()));
  return in;
}

Corpus ingest(const InputPaths& paths, std::vector<StagedDiagnostic>& diags) {
  Corpus c;
  {
    auto in = open_input(paths.stocks);
    c.stocks = load_stock_meta(in);
  }
  {
    auto in = open_input(paths.calendar);
    c.calendar = load_calendar(in);
  }
  {
    auto in = open_input(paths.orders);
    OrderParseOptions opts;
    opts.resort = paths.resort;
    auto parsed = parse_order_events(in, {}, opts);
    for (auto& d : parsed.diagnostics) d.source = paths.orders.filename().string();
    add_diagnostics(diags, "ingest", parsed.diagnostics);
    c.events = std::move(parsed.events);
  }
  if (paths.dividends) {
    auto in = open_input(*paths.dividends);
    std::set<std::string> known;
    for (const auto& [id, meta] : c.stocks) known.insert(id);
    auto parsed = load_dividends(in, &known);
    add_diagnostics(diags, "ingest", parsed.diagnostics);
    c.dividends = std::move(parsed.events);
  }
  if (paths.index) {
    auto in = open_input(*paths.index);
    c.index = load_index_series(in);
  }
  return c;
}

Corpus synthesize(const PopulationSpec& spec, std::uint64_t seed, std::size_t workers) {
  Corpus c;
  auto roster = generate_population(spec, seed);
  c.calendar = synth_calendar(spec);
  c.stocks = generate_stock_table(spec, seed);
  auto flow = generate_orderflow(roster, spec, c.calendar, c.stocks, seed, workers);
  c.events = std::move(flow.events);
  c.truth = std::move(flow.truth);
  return c;
}

std::string pools_csv(const std::map<Cell, Pools>& cells) {
  std::ostringstream o;
  o << "market,class,total,winners,losers,flats,winner_fraction,loser_fraction\n";
  for (const auto& [cell, p] : cells)
    o << to_string(cell.market) << ',' << to_string(cell.investor_class) << ',' << p.total() << ',' << p.winners.size()
      << ',' << p.losers.size() << ',' << p.flats.size() << ',' << format_double(p.winner_fraction()) << ','
      << format_double(p.loser_fraction()) << '\n';
  return o.str();
}

// Pools, binned series, fits, consistency and box statistics.
void spectro_reports(const PipelineConfig& cfg, std::span<const InvestorPerformance> perfs, Bundle& bundle,
                     std::vector<StagedDiagnostic>& diags) {
  const auto cells = classify_investors(perfs);
  bundle.put("pools.csv", pools_csv(cells));

  std::ostringstream fits, consistency, box;
  write_fit_header(fits);
  write_consistency_header(consistency);
  write_box_stats_header(box);
  auto note = [&](Severity s, std::string msg) { diags.push_back({"spectro", {s, "spectro", 0, std::move(msg)}}); };

  for (const auto& [cell, pools] : cells) {
    std::vector<Observation> obs;
    std::vector<double> returns;
    for (const auto& p : perfs)
      if (p.market == cell.market && p.investor_class == cell.investor_class) {
        obs.push_back({static_cast<double>(p.J), p.dt_days, p.R});
        returns.push_back(p.R);
      }
    write_box_stats_row(box, cell, box_stats(returns), returns.size());

    auto by_j = bin_and_average(obs, BinKind::frequency, edges_for(BinKind::frequency, obs, cfg.binning));
    auto by_dt = bin_and_average(obs, BinKind::holding_time, edges_for(BinKind::holding_time, obs, cfg.binning));
    std::ostringstream binned;
    std::vector<BinnedSeries> both = by_j;
    both.insert(both.end(), by_dt.begin(), by_dt.end());
    write_binned_series(binned, both);
    bundle.put(fmt::format("binned_{}.csv", cell_tag(cell)), binned.str());

    for (std::size_t p = 0; p < 3; ++p) {
      const Pool pool = by_j[p].pool;
      const auto tag = fmt::format("{} {}", cell_tag(cell), to_string(pool));
      if ((pool == Pool::winner && pools.winners.empty()) || (pool == Pool::loser && pools.losers.empty()))
        note(Severity::warning, fmt::format("{}: empty pool, fits skipped", tag));
      auto a = fit_power_law(by_j[p], Relation::return_vs_frequency, cfg.fit);
      auto g = fit_power_law(by_j[p], Relation::holding_vs_frequency, cfg.fit);
      PowerLawFit b = by_dt[p].bins.empty() ? PowerLawFit{.relation = Relation::return_vs_holding, .notes = {}}
                                            : fit_power_law(by_dt[p], Relation::return_vs_holding, cfg.fit);
      if (by_dt[p].bins.empty()) b.notes.push_back("no positive holding times");
      ExponentTriple triple;
      for (const PowerLawFit* f : {&a, &b, &g}) {
        write_fit_row(fits, cell, pool, *f);
        for (const auto& n : f->notes) note(Severity::info, fmt::format("{} {}: {}", tag, exponent_name(f->relation), n));
        if (!f->available) continue;
        Estimate e{f->exponent, f->std_error};
        if (f->relation == Relation::return_vs_frequency) triple.alpha = e;
        if (f->relation == Relation::return_vs_holding) triple.beta = e;
        if (f->relation == Relation::holding_vs_frequency) triple.gamma = e;
      }
      write_consistency_row(consistency, cell, pool, check_exponent_relation(triple, cfg.k, cfg.propagation));
    }
  }
  if (cells.empty()) note(Severity::warning, "no investor performances; reports are empty");
  bundle.put("fits.csv", fits.str());
  bundle.put("consistency.csv", consistency.str());
  bundle.put("box_stats.csv", box.str());
}

std::string one_over_n_csv(const Corpus& corpus, const ReplayResult& replay, std::vector<StagedDiagnostic>& diags) {
  std::ostringstream o;
  o << "market,date,portfolio,index\n";
  const auto& days = corpus.calendar.days();
  if (days.empty()) return o.str();
  for (Market m : {Market::A, Market::B}) {
    DailyPrices prices;
    prices.days = days;
    for (const auto& [id, meta] : corpus.stocks) {
      if (meta.market != m) continue;
      auto closes_it = replay.daily_close.find(id);
      if (closes_it == replay.daily_close.end()) continue;  // never traded
      std::vector<std::optional<double>> closes(days.size());
      for (std::size_t d = 0; d < days.size(); ++d)
        if (auto it = closes_it->second.find(days[d]); it != closes_it->second.end()) closes[d] = it->second.to_double();
      if (!closes.front()) {
        closes.front() = meta.previous_close.to_double();
        diags.push_back({"spectro", {Severity::info, "spectro", 0,
                                     fmt::format("{}: no first-day trade; 1/N uses the previous close", id)}});
      }
      prices.closes[id] = std::move(closes);
    }
    if (prices.closes.empty()) continue;
    std::vector<IndexPoint> index;
    if (auto it = corpus.index.by_market.find(m); it != corpus.index.by_market.end()) index = it->second;
    auto result = one_over_n_benchmark(prices, index);
    add_diagnostics(diags, "spectro", result.diagnostics);
    for (const auto& p : result.points)
      o << to_string(m) << ',' << format_date(p.day) << ',' << format_double(p.portfolio) << ','
        << (p.index ? format_double(*p.index) : std::string("NA")) << '\n';
  }
  return o.str();
}

std::string manifest_json(const PipelineConfig& cfg, Stage stage, const Bundle& bundle) {
  const auto canonical = canonical_config(cfg);
  nlohmann::ordered_json j;
  j["tool"] = "stratscope";
  j["version"] = std::string(kVersion);
  j["stage"] = std::string(to_string(stage));
  j["seed"] = cfg.seed;
  j["config_sha256"] = sha256_hex(canonical);
  j["config"] = canonical;
  auto& files = j["files"];
  files = nlohmann::ordered_json::object();
  for (const auto& [name, content] : bundle.files()) files[name] = sha256_hex(content);
  return j.dump(2) + "\n";
}

std::map<std::string, Price> closing_prices(const Corpus& corpus, const ReplayResult& replay) {
  std::map<std::string, Price> out;
  for (const auto& [id, meta] : corpus.stocks) {
    if (meta.period_end_price) {
      out[id] = *meta.period_end_price;
    } else if (auto it = replay.daily_close.find(id); it != replay.daily_close.end() && !it->second.empty()) {
      out[id] = it->second.rbegin()->second;
    }
  }
  return out;
}

std::map<std::string, Price> last_trades(const ReplayResult& replay) {
  std::map<std::string, Price> out;
  for (const auto& [id, closes] : replay.daily_close)
    if (!closes.empty()) out[id] = closes.rbegin()->second;
  return out;
}

}  // namespace

RunSummary run_pipeline(const PipelineConfig& cfg, const RunOptions& options) {
  in_stage("config", [&] { validate_config(cfg); });
  const std::size_t workers = std::max<std::size_t>(1, options.workers);
  Bundle bundle;
  std::vector<StagedDiagnostic> diags;
  RunSummary summary;

  Corpus corpus = in_stage(cfg.synth ? "synth" : "ingest", [&] {
    return cfg.synth ? synthesize(*cfg.synth, cfg.seed, workers) : ingest(*cfg.input, diags);
  });
  if (corpus.truth) bundle.put("ground_truth.json", ground_truth_json(*corpus.truth));

  if (options.stage == Stage::synth) {
    if (!cfg.synth) throw PipelineError("synth", "the synth stage needs a [synth] section");
    in_stage("synth", [&] {
      std::ostringstream orders, calendar, stocks, dividends;
      write_order_events(orders, corpus.events);
      write_calendar(calendar, corpus.calendar);
      write_stock_meta(stocks, corpus.stocks);
      write_dividends(dividends, {});
      bundle.put("orders.csv", orders.str());
      bundle.put("calendar.csv", calendar.str());
      bundle.put("stocks.csv", stocks.str());
      bundle.put("dividends.csv", dividends.str());
    });
  } else {
    auto replayed = in_stage("replay", [&] { return replay(corpus.events, corpus.calendar, corpus.stocks, workers); });
    add_diagnostics(diags, "replay", replayed.diagnostics);
    summary.fills = replayed.fills.size();
    if (options.stage == Stage::replay || options.stage == Stage::run) {
      std::ostringstream fills;
      write_fills(fills, replayed.fills);
      bundle.put("fills.csv", fills.str());
    }

    if (options.stage != Stage::replay) {
      const auto dividends = make_dividend_table(corpus.dividends);
      auto ledger = in_stage("ledger", [&] {
        return run_ledger(replayed.fills, corpus.stocks, corpus.calendar.period_end(), cfg.fees, dividends, cfg.ledger,
                          last_trades(replayed), workers);
      });
      add_diagnostics(diags, "ledger", ledger.diagnostics);
      summary.investors = ledger.performances.size();
      std::ostringstream perf;
      write_performance(perf, ledger.performances);
      bundle.put("performance.csv", perf.str());

      if (options.stage == Stage::analyze || options.stage == Stage::run) {
        in_stage("spectro", [&] {
          spectro_reports(cfg, ledger.performances, bundle, diags);
          bundle.put("one_over_n.csv", one_over_n_csv(corpus, replayed, diags));
        });
      }

      if (options.stage == Stage::counterfactual || options.stage == Stage::run) {
        in_stage("counterfactual", [&] {
          const auto tapes = build_tapes(replayed.fills, closing_prices(corpus, replayed));
          std::vector<InvestorBook> books;
          books.reserve(ledger.performances.size());
          for (auto b : ledger.book_of) books.push_back(ledger.books[b]);

          CounterfactualSettings settings;
          settings.replicas = cfg.replicas;
          settings.seed = derive_seed(cfg.seed, stable_hash("counterfactual"));
          settings.strict_position_mode = cfg.strict_position_mode;
          settings.workers = workers;
          settings.ledger = cfg.ledger;

          std::map<Cell, std::pair<ReplicaBinner, ReplicaBinner>> per_cell;
          ReplicaBinner all_j(BinKind::frequency, cfg.binning), all_dt(BinKind::holding_time, cfg.binning);
          auto mc_diags = run_monte_carlo_streaming(
              books, tapes, cfg.fees, dividends, settings, [&](std::size_t i, std::span<const ReplicaResult> results) {
                const Cell cell{books[i].market, books[i].investor_class};
                auto it = per_cell.find(cell);
                if (it == per_cell.end())
                  it = per_cell
                           .emplace(cell, std::pair{ReplicaBinner(BinKind::frequency, cfg.binning),
                                                    ReplicaBinner(BinKind::holding_time, cfg.binning)})
                           .first;
                for (const auto& r : results) {
                  all_j.add(r);
                  all_dt.add(r);
                  it->second.first.add(r);
                  it->second.second.add(r);
                }
              });
          add_diagnostics(diags, "counterfactual", mc_diags);

          auto emit = [&](const std::string& name, const ReplicaBinner& j, const ReplicaBinner& dt) {
            auto series = j.finish();
            auto more = dt.finish();
            series.insert(series.end(), more.begin(), more.end());
            std::ostringstream o;
            write_replica_summary(o, series);
            bundle.put(name, o.str());
          };
          emit("replica_summary.csv", all_j, all_dt);
          for (const auto& [cell, binners] : per_cell)
            emit(fmt::format("replica_summary_{}.csv", cell_tag(cell)), binners.first, binners.second);
        });
      }
    }
  }

  bundle.put("diagnostics.csv", diagnostics_csv(diags));
  bundle.put("manifest.json", manifest_json(cfg, options.stage, bundle));
  in_stage("output", [&] { bundle.commit(cfg.output_dir); });

  for (const auto& [name, content] : bundle.files()) summary.files.push_back(name);
  for (auto& d : diags) summary.diagnostics.push_back(std::move(d.diagnostic));
  return summary;
}

std::vector<InvestorPerformance> read_performance(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line) || csv::trim(line) != "investor,class,market,R,J,dt_days,label")
    throw ParseError("performance file: unexpected header", 1);
  std::vector<InvestorPerformance> out;
  std::size_t n = 1;
  while (csv::next_line(in, line)) {
    ++n;
    if (csv::is_blank(line)) continue;
    auto f = csv::split(line);
    if (f.size() != 7) throw ParseError("performance file: expected 7 fields", n);
    try {
      InvestorPerformance p;
      p.investor_id = std::string(f[0]);
      p.investor_class = parse_investor_class(f[1]);
      p.market = parse_market(f[2]);
      p.R = parse_real(f[3]);
      p.J = parse_int<std::int64_t>(f[4]);
      p.dt_days = parse_real(f[5]);
      p.label = outcome_of(p.R);
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw ParseError(fmt::format("performance file: {}", e.what()), n);
    }
  }
  return out;
}

RunSummary run_report(const PipelineConfig& cfg, const fs::path& dir) {
  auto perfs = in_stage("report", [&] {
    auto in = open_input(dir / "performance.csv");
    return read_performance(in);
  });
  Bundle bundle;
  std::vector<StagedDiagnostic> diags;
  in_stage("spectro", [&] { spectro_reports(cfg, perfs, bundle, diags); });
  in_stage("output", [&] { bundle.commit(dir); });
  RunSummary summary;
  summary.investors = perfs.size();
  for (const auto& [name, content] : bundle.files()) summary.files.push_back(name);
  for (auto& d : diags) summary.diagnostics.push_back(std::move(d.diagnostic));
  return summary;
}

}  // namespace stratscope
