// stratscope: command-line driver for the pipeline.
//
// Exit status: 0 success, 1 a pipeline stage failed, 2 bad usage or configuration.
// STRATSCOPE_LOG sets verbosity (trace, debug, info, warn, error, off; default info).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "stratscope/pipeline.hpp"

namespace fs = std::filesystem;
using namespace stratscope;

namespace {

struct CommonOptions {
  std::string config;
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("stratscope");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("STRATSCOPE_LOG")) {
    auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off")
      spdlog::warn("STRATSCOPE_LOG='{}' not recognised; keeping info", env);
    else
      spdlog::set_level(level);
  }
}

PipelineConfig resolve_config(const CommonOptions& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

void report_summary(const RunSummary& s, const fs::path& dir) {
  std::size_t warnings = 0, errors = 0;
  for (const auto& d : s.diagnostics) {
    if (d.severity == Severity::warning) ++warnings;
    if (d.severity == Severity::error) ++errors;
    auto level = d.severity == Severity::error     ? spdlog::level::warn
                 : d.severity == Severity::warning ? spdlog::level::debug
                                                   : spdlog::level::trace;
    spdlog::log(level, "{}{}: {}", d.source, d.line ? fmt::format(":{}", d.line) : "", d.message);
  }
  spdlog::info("{} investor(s), {} fill(s); {} warning(s), {} error diagnostic(s)", s.investors, s.fills, warnings,
               errors);
  for (const auto& f : s.files) std::cout << (dir / f).string() << '\n';
}

int run_stage(Stage stage, const CommonOptions& o) {
  auto cfg = resolve_config(o);
  spdlog::info("{}: seed {}, {} worker(s), output {}", to_string(stage), cfg.seed, o.workers, cfg.output_dir.string());
  auto summary = run_pipeline(cfg, RunOptions{stage, o.workers});
  report_summary(summary, cfg.output_dir);
  return 0;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config = true) {
  auto* c = cmd->add_option("--config", o.config, "Configuration file");
  if (needs_config) c->required();
  cmd->add_option("--workers", o.workers, "Worker threads (results do not depend on it)")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
  cmd->add_option("--seed", o.seed, "Master seed; overrides [run] seed");
  cmd->add_option("--out", o.out, "Output directory; overrides [output] dir");
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Investor-performance analytics over order-flow data"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonOptions opts;
  bool force = false;

  auto* init = app.add_subcommand("init", "Write a commented configuration template");
  init->add_option("--config", opts.config, "Destination (stdout when omitted)");
  init->add_flag("--force", force, "Overwrite an existing file");

  struct StageCommand {
    const char* name;
    const char* help;
    Stage stage;
  };
  const StageCommand stages[] = {
      {"synth", "Generate a synthetic order-flow corpus", Stage::synth},
      {"replay", "Replay order flow through the matching engine", Stage::replay},
      {"analyze", "Replay, ledger and stylized-fact reports", Stage::analyze},
      {"counterfactual", "Replay, ledger and the random-timing benchmark", Stage::counterfactual},
      {"run", "Every stage", Stage::run},
  };
  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, opts);
    stage_cmds.emplace_back(cmd, s.stage);
  }
  auto* report = app.add_subcommand("report", "Recompute spectro reports from an existing performance.csv");
  add_common(report, opts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (init->parsed()) {
      if (opts.config.empty()) {
        std::cout << config_template();
        return 0;
      }
      if (fs::exists(opts.config) && !force) {
        std::cerr << "error: " << opts.config << " exists (use --force)\n";
        return 2;
      }
      std::ofstream f(opts.config);
      f << config_template();
      if (!f) {
        std::cerr << "error: cannot write " << opts.config << '\n';
        return 2;
      }
      return 0;
    }
    if (report->parsed()) {
      PipelineConfig cfg;
      if (!opts.config.empty()) cfg = resolve_config(opts);
      fs::path dir = !opts.out.empty() ? fs::path(opts.out) : cfg.output_dir;
      auto summary = run_report(cfg, dir);
      report_summary(summary, dir);
      return 0;
    }
    for (const auto& [cmd, stage] : stage_cmds)
      if (cmd->parsed()) return run_stage(stage, opts);
  } catch (const ConfigError& e) {
    std::cerr << "error: stage=config: " << e.what() << '\n';
    return 2;
  } catch (const PipelineError& e) {
    std::cerr << "error: stage=" << e.what() << '\n';
    return e.stage() == "config" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
