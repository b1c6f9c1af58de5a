#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "stratscope/pipeline.hpp"

namespace fs = std::filesystem;
using namespace stratscope;

namespace {

const fs::path kFixtures{STRATSCOPE_FIXTURE_DIR};

class TempDir {
 public:
  explicit TempDir(std::string_view tag) {
    path_ = fs::temp_directory_path() / fmt_name(tag);
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  static std::string fmt_name(std::string_view tag) {
    return "stratscope-test-" + std::string(tag) + "-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed());
  }
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> read_bundle(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    rows.push_back(std::move(f));
  }
  return rows;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

PipelineConfig small_synth(const fs::path& out) {
  auto cfg = parse_config(
      "[run]\nseed = 11\n"
      "[synth]\nindividuals_a = 120\ninstitutions_a = 20\nindividuals_b = 40\ninstitutions_b = 10\n"
      "stocks_a = 4\nstocks_b = 2\ndays = 3\nfrequency_cap = 60\n"
      "[counterfactual]\nreplicas = 20\n");
  cfg.output_dir = out;
  return cfg;
}

PipelineConfig null_fixture(const fs::path& out) {
  auto cfg = load_config(kFixtures / "null" / "config.ini");
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

TEST(Config, TemplateParsesAndValidates) {
  auto cfg = parse_config(config_template());
  EXPECT_TRUE(cfg.synth.has_value());
  EXPECT_FALSE(cfg.input.has_value());
  EXPECT_NO_THROW(validate_config(cfg));
  EXPECT_EQ(cfg.replicas, 2000u);
  EXPECT_EQ(cfg.k, 2.0);
}

TEST(Config, CanonicalRoundTrip) {
  auto cfg = parse_config(
      "[run]\nseed = 5\n[synth]\nindividuals_a = 7\nsell_probability = 0.55\n"
      "[fees.A]\nbrokerage = 0.002\nbrokerage_institution = 0.001\nminimum_fee = 3\n"
      "[fit]\npropagation = linear\nk = 1.5\nweighted = true\n");
  const auto text = canonical_config(cfg);
  auto again = parse_config(text);
  EXPECT_EQ(canonical_config(again), text);
  EXPECT_EQ(again.seed, 5u);
  EXPECT_EQ(again.synth->individuals_a, 7u);
  EXPECT_EQ(again.propagation, ErrorPropagation::linear);
  ASSERT_TRUE(again.fees.a.brokerage_institution.has_value());
}

TEST(Config, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse_config("[synth]\nagents = 5\n"), ConfigError);
  EXPECT_THROW(parse_config("[synth]\n[magic]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[synth]\n[fit]\npropagation = cubic\n"), ConfigError);
  EXPECT_THROW(parse_config("[synth]\n[run]\nseed = abc\n"), ConfigError);
}

TEST(Config, ExactlyOneSource) {
  EXPECT_THROW(parse_config("[input]\norders = a\ncalendar = b\nstocks = c\n[synth]\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nseed = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[input]\norders = a\n"), ConfigError);
  // A bare [synth] header means every synth default.
  auto defaults = parse_config("[synth]\n");
  ASSERT_TRUE(defaults.synth);
  EXPECT_EQ(*defaults.synth, PopulationSpec{});
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  auto cfg = load_config(kFixtures / "null" / "config.ini");
  ASSERT_TRUE(cfg.input);
  EXPECT_EQ(cfg.input->orders, kFixtures / "null" / "orders.csv");
  EXPECT_NO_THROW(validate_config(cfg));
}

TEST(Config, ValidationCatchesMissingFilesAndBadRanges) {
  auto cfg = load_config(kFixtures / "null" / "config.ini");
  cfg.input->calendar = kFixtures / "null" / "no-such-file.csv";
  EXPECT_THROW(validate_config(cfg), ConfigError);
  auto zero = small_synth("x");
  zero.replicas = 0;
  EXPECT_THROW(validate_config(zero), ConfigError);
  auto ratio = small_synth("x");
  ratio.binning.j_ratio = 1.0;
  EXPECT_THROW(validate_config(ratio), ConfigError);
}

TEST(Pipeline, NullFixtureGivesZeroReturnsEverywhere) {
  TempDir tmp("null");
  const auto out = tmp.path() / "bundle";
  auto summary = run_pipeline(null_fixture(out), RunOptions{Stage::run, 2});
  EXPECT_EQ(summary.investors, 13u);  // twelve traders plus the market maker
  EXPECT_GT(summary.fills, 0u);

  auto perf = csv_rows(slurp(out / "performance.csv"));
  ASSERT_EQ(perf.size(), 13u);
  for (const auto& row : perf) {
    EXPECT_EQ(std::stod(row[3]), 0.0) << row[0];
    EXPECT_EQ(row[6], "flat") << row[0];
  }

  // Every pool except the flat one is empty, so no fit is available.
  for (const auto& row : csv_rows(slurp(out / "pools.csv"))) {
    EXPECT_EQ(row[3], "0");
    EXPECT_EQ(row[4], "0");
  }
  for (const auto& row : csv_rows(slurp(out / "consistency.csv"))) EXPECT_EQ(row.back(), "indeterminate");

  for (const auto& row : csv_rows(slurp(out / "replica_summary.csv"))) {
    EXPECT_EQ(std::stod(row[3]), 0.0);
    EXPECT_EQ(std::stod(row[4]), 0.0);
  }

  bool warned = false;
  for (const auto& d : summary.diagnostics) warned |= d.severity == Severity::warning;
  EXPECT_TRUE(warned);
}

TEST(Pipeline, ReportSchemasMatchGolden) {
  TempDir tmp("golden");
  const auto out = tmp.path() / "bundle";
  run_pipeline(null_fixture(out));
  std::istringstream golden(slurp(kFixtures / "golden" / "headers.txt"));
  std::string line;
  std::size_t checked = 0;
  while (std::getline(golden, line)) {
    if (line.empty()) continue;
    auto colon = line.find(": ");
    ASSERT_NE(colon, std::string::npos) << line;
    const auto file = line.substr(0, colon);
    ASSERT_TRUE(fs::exists(out / file)) << file;
    EXPECT_EQ(first_line(slurp(out / file)), line.substr(colon + 2)) << file;
    ++checked;
  }
  EXPECT_GE(checked, 10u);
}

TEST(Pipeline, ManifestRecordsConfigAndFileHashes) {
  TempDir tmp("manifest");
  const auto out = tmp.path() / "bundle";
  run_pipeline(null_fixture(out));
  const auto manifest = slurp(out / "manifest.json");
  EXPECT_NE(manifest.find("\"config_sha256\""), std::string::npos);
  for (const auto& [name, content] : read_bundle(out)) {
    if (name != "manifest.json") {
      EXPECT_NE(manifest.find("\"" + name + "\""), std::string::npos) << name;
    }
  }
}

TEST(Pipeline, SynthRerunsAreByteIdentical) {
  TempDir tmp("rerun");
  auto a = small_synth(tmp.path() / "a");
  auto b = small_synth(tmp.path() / "b");
  run_pipeline(a, RunOptions{Stage::run, 1});
  run_pipeline(b, RunOptions{Stage::run, 3});
  auto ba = read_bundle(a.output_dir), bb = read_bundle(b.output_dir);
  ASSERT_FALSE(ba.empty());
  EXPECT_EQ(ba, bb);
  EXPECT_TRUE(ba.contains("ground_truth.json"));

  auto c = small_synth(tmp.path() / "c");
  c.seed = 12;
  run_pipeline(c);
  EXPECT_NE(read_bundle(c.output_dir).at("performance.csv"), ba.at("performance.csv"));
}

TEST(Pipeline, SynthStageWritesAReplayableCorpus) {
  TempDir tmp("synth");
  auto cfg = small_synth(tmp.path() / "corpus");
  run_pipeline(cfg, RunOptions{Stage::synth, 1});
  for (auto f : {"orders.csv", "calendar.csv", "stocks.csv", "dividends.csv", "ground_truth.json"})
    EXPECT_TRUE(fs::exists(cfg.output_dir / f)) << f;

  // Replaying the written corpus gives the same ledger as the in-memory run.
  auto direct = small_synth(tmp.path() / "direct");
  run_pipeline(direct, RunOptions{Stage::analyze, 1});
  PipelineConfig from_files = direct;
  from_files.synth.reset();
  from_files.input = InputPaths{cfg.output_dir / "orders.csv", cfg.output_dir / "calendar.csv",
                                cfg.output_dir / "stocks.csv", cfg.output_dir / "dividends.csv", std::nullopt, false};
  from_files.output_dir = tmp.path() / "from-files";
  run_pipeline(from_files, RunOptions{Stage::analyze, 1});
  EXPECT_EQ(slurp(direct.output_dir / "performance.csv"), slurp(from_files.output_dir / "performance.csv"));
}

TEST(Pipeline, FailureLeavesNoOutput) {
  TempDir tmp("fail");
  fs::copy(kFixtures / "null", tmp.path() / "in");
  {
    std::ofstream cal(tmp.path() / "in" / "calendar.csv");
    cal << "date\n2003-13-45\n";
  }
  auto cfg = load_config(tmp.path() / "in" / "config.ini");
  cfg.output_dir = tmp.path() / "out";
  try {
    run_pipeline(cfg);
    FAIL() << "expected a pipeline error";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "ingest");
  }
  EXPECT_FALSE(fs::exists(cfg.output_dir));
  for (const auto& e : fs::directory_iterator(tmp.path()))
    EXPECT_EQ(e.path().filename().string().find("staging"), std::string::npos) << e.path();
}

TEST(Pipeline, SynthStageNeedsSynthSection) {
  TempDir tmp("stage");
  EXPECT_THROW(run_pipeline(null_fixture(tmp.path() / "x"), RunOptions{Stage::synth, 1}), PipelineError);
  EXPECT_FALSE(fs::exists(tmp.path() / "x"));
}

TEST(Report, RecomputesSpectroFilesFromPerformance) {
  TempDir tmp("report");
  auto cfg = small_synth(tmp.path() / "bundle");
  run_pipeline(cfg, RunOptions{Stage::analyze, 1});
  const auto before = read_bundle(cfg.output_dir);
  fs::remove(cfg.output_dir / "fits.csv");
  fs::remove(cfg.output_dir / "consistency.csv");
  auto summary = run_report(cfg, cfg.output_dir);
  EXPECT_EQ(summary.investors, csv_rows(before.at("performance.csv")).size());
  for (auto f : {"fits.csv", "consistency.csv", "pools.csv", "box_stats.csv"})
    EXPECT_EQ(slurp(cfg.output_dir / f), before.at(f)) << f;
}

TEST(Report, ReadPerformanceRoundTripAndErrors) {
  std::istringstream ok(
      "investor,class,market,R,J,dt_days,label\n"
      "T1,ind,A,0.25,4,1.5,winner\n"
      "T2,inst,B,-0.1,2,0,loser\n");
  auto perfs = read_performance(ok);
  ASSERT_EQ(perfs.size(), 2u);
  EXPECT_EQ(perfs[0].J, 4);
  EXPECT_EQ(perfs[1].market, Market::B);
  EXPECT_EQ(perfs[1].label, Outcome::loser);

  std::istringstream bad_header("id,R\n");
  EXPECT_THROW(read_performance(bad_header), ParseError);
  std::istringstream bad_row("investor,class,market,R,J,dt_days,label\nT1,ind,A,x,4,1.5,winner\n");
  try {
    read_performance(bad_row);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}
