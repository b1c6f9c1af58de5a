#pragma once

// End-to-end orchestration from one configuration file:
// synth or ingest -> replay -> ledger -> counterfactual -> reports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stratscope/counterfactual.hpp"
#include "stratscope/ledger.hpp"
#include "stratscope/spectro.hpp"
#include "stratscope/synth.hpp"

namespace stratscope {

inline constexpr std::string_view kVersion = "0.1.0";

struct InputPaths {
  std::filesystem::path orders;
  std::filesystem::path calendar;
  std::filesystem::path stocks;
  std::optional<std::filesystem::path> dividends;
  std::optional<std::filesystem::path> index;
  bool resort = false;
};

struct PipelineConfig {
  std::optional<InputPaths> input;
  std::optional<PopulationSpec> synth;
  std::uint64_t seed = 42;
  FeeSchedules fees;
  LedgerOptions ledger;
  std::size_t replicas = 2000;
  bool strict_position_mode = false;
  BinSettings binning;
  FitSettings fit;
  double k = 2.0;
  ErrorPropagation propagation = ErrorPropagation::quadrature;
  std::filesystem::path output_dir = "stratscope-out";
};

// Key=value text with [sections]; relative paths resolve against `base_dir`.
// Throws ConfigError on unknown keys, bad values, or a broken invariant.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
// Exactly one of input/synth, referenced files exist, fee schedules valid.
void validate_config(const PipelineConfig& config);
// Normalised text of every setting that affects outputs (output dir excluded).
// parse_config(canonical_config(c)) reproduces c.
std::string canonical_config(const PipelineConfig& config);
// Commented template with every default, as written by `init`.
std::string config_template();

enum class Stage : std::uint8_t { synth, replay, analyze, counterfactual, run };
std::string_view to_string(Stage s);

// A failed stage; the message carries the diagnostic.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunSummary {
  std::vector<std::string> files;  // written, relative to the output dir, sorted
  Diagnostics diagnostics;
  std::size_t investors = 0;
  std::size_t fills = 0;
};

struct RunOptions {
  Stage stage = Stage::run;
  std::size_t workers = 1;
};

// Outputs are staged and moved into config.output_dir only when every stage
// succeeds; on failure the staging area is removed and PipelineError thrown.
RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

// Recomputes the spectro reports (pools, binned series, fits, consistency,
// box statistics) from an existing `performance.csv` in `dir`.
RunSummary run_report(const PipelineConfig& config, const std::filesystem::path& dir);

// CSV `investor,class,market,R,J,dt_days,label`.
std::vector<InvestorPerformance> read_performance(std::istream& in);

}  // namespace stratscope
