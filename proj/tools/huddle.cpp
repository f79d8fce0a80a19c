// huddle: serve the API, replay a study scenario, or compute metrics.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "huddle/common/error.hpp"
#include "huddle/metrics/report.hpp"
#include "huddle/service/api.hpp"
#include "huddle/service/config.hpp"
#include "huddle/service/replay.hpp"
#include "huddle/service/server.hpp"
#include "huddle/service/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace huddle;

namespace {

void setup_logging(const std::string& level) {
  spdlog::set_pattern("ts=%Y-%m-%dT%H:%M:%S.%e level=%l %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::validation, "cannot write " + path.string(), path.string());
  out << text;
}

void emit(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_file(path, j.dump(2) + "\n");
  }
}

int serve(const std::string& config_path) {
  const auto cfg = service::load_config(config_path);
  setup_logging(cfg.log_level);
  auto gateway = service::make_gateway(cfg.llm);

  service::ServiceOptions opts;
  opts.data_dir = cfg.data_dir;
  opts.snapshot_every = cfg.snapshot_every;
  opts.fsync = cfg.fsync;
  opts.core.agent_name = cfg.agent_name;
  if (cfg.control_message) opts.core.control_message = *cfg.control_message;

  service::Service svc(opts, gateway);
  for (const auto& w : svc.recovery_warnings()) spdlog::warn("event=recovery_warning detail=\"{}\"", w);
  spdlog::info("event=recovered data_dir={} last_seq={} replayed={}", cfg.data_dir.string(), svc.last_seq(),
               svc.replayed_events());

  service::Api api(svc, cfg.auth_token);
  service::Server server(api, {cfg.bind_address, cfg.port, cfg.threads});
  server.run_until_signal();
  return 0;
}

int replay(const std::string& scenario_path, const std::string& report_path, const std::string& work_dir,
           int snapshot_every) {
  setup_logging("warn");
  const auto scenario = service::load_scenario(scenario_path);
  service::ReplayOptions opts;
  opts.work_dir = work_dir;
  opts.snapshot_every = snapshot_every;
  const auto outcome = service::replay_study(scenario, opts);
  emit(outcome.report, report_path);
  for (const auto& d : outcome.report["diagnostics"]) std::cerr << d.get<std::string>() << "\n";
  std::cerr << (outcome.ok ? "replay ok" : "replay FAILED") << ": " << outcome.report["events"] << " events\n";
  return outcome.ok ? 0 : 1;
}

int metrics_cmd(const std::string& input_path, const std::string& alternative, bool fdr, bool include_incomplete,
                const std::string& csv_dir, const std::string& output) {
  std::ifstream in(input_path);
  if (!in) fail(ErrorCode::validation, "cannot read " + input_path, input_path);
  json input;
  try {
    input = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::validation, std::string("input is not valid JSON: ") + e.what(), "$");
  }
  metrics::ReportOptions opts;
  opts.alternative = alternative == "greater" ? metrics::Alternative::treatment_greater
                                              : metrics::Alternative::treatment_less;
  opts.fdr = fdr;
  opts.include_incomplete = include_incomplete;
  const auto report = metrics::build_report(input, opts);
  if (!csv_dir.empty()) {
    fs::create_directories(csv_dir);
    write_file(fs::path(csv_dir) / "gini_pairs.csv", metrics::gini_pairs_csv(report.comparison));
    write_file(fs::path(csv_dir) / "deviations.csv", metrics::deviations_csv(report.comparison));
    write_file(fs::path(csv_dir) / "tests.csv", metrics::tests_csv(report));
  }
  emit(report, output);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Team meeting facilitation service and study tools"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP + WebSocket API");
  serve_cmd->add_option("--config", config_path, "Config file (TOML subset)")->required()->check(CLI::ExistingFile);

  std::string scenario_path, report_path, work_dir;
  int snapshot_every = 10;
  auto* replay_cmd = app.add_subcommand("replay", "Run a two-condition study scenario against the mock model");
  replay_cmd->add_option("--scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--report", report_path, "Write the report here instead of stdout");
  replay_cmd->add_option("--work-dir", work_dir, "Keep the event log in this directory");
  replay_cmd->add_option("--snapshot-every", snapshot_every, "Snapshot interval in events")
      ->check(CLI::NonNegativeNumber);

  std::string input_path, alternative = "less", csv_dir, output;
  bool fdr = false, include_incomplete = false;
  auto* metrics = app.add_subcommand("metrics", "Compare control and treatment meetings");
  metrics->add_option("--input", input_path, "Meeting stats JSON")->required()->check(CLI::ExistingFile);
  metrics->add_option("--alternative", alternative, "Direction of the one-sided tests")
      ->check(CLI::IsMember({"greater", "less"}));
  metrics->add_flag("--fdr", fdr, "Benjamini-Hochberg adjust the p-values");
  metrics->add_flag("--include-incomplete", include_incomplete, "Keep participants with incomplete data");
  metrics->add_option("--export-csv", csv_dir, "Directory for gini_pairs.csv, deviations.csv, tests.csv");
  metrics->add_option("--output", output, "Write the report here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return serve(config_path);
    if (*replay_cmd) return replay(scenario_path, report_path, work_dir, snapshot_every);
    if (*metrics) return metrics_cmd(input_path, alternative, fdr, include_incomplete, csv_dir, output);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what();
    if (!e.detail().empty()) std::cerr << " [" << e.detail() << "]";
    std::cerr << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
