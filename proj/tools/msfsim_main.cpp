#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msfsim/analysis.hpp"
#include "msfsim/errors.hpp"
#include "msfsim/experiment.hpp"
#include "msfsim/trace.hpp"
#include "msfsim/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

constexpr double kMphToMps = 0.44704;

struct GenTraceArgs {
  double duration = 300.0;
  double speed_mph = 45.0;
  double speed_mps = -1.0;
  double heading = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t inject_seed = 1;
  bool noise_free = false;
  msfsim::trace::NoiseModel noise;
  std::vector<std::string> unconfident_specs;
  std::string out_path = "trace.jsonl";
};

msfsim::trace::UnconfidentPeriod parse_period_spec(const std::string& spec) {
  // start:end:var_scale:bias_sigma
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw msfsim::ValidationError("--unconfident: malformed number in '" + spec + "'");
    }
  }
  if (parts.size() != 4) {
    throw msfsim::ValidationError("--unconfident: expected start:end:var_scale:bias_sigma, got '" +
                                  spec + "'");
  }
  return {parts[0], parts[1], parts[2], parts[3]};
}

int cmd_gen_trace(const GenTraceArgs& args) {
  msfsim::trace::SyntheticScenario scenario;
  scenario.speed_mps = args.speed_mps >= 0.0 ? args.speed_mps : args.speed_mph * kMphToMps;
  scenario.heading = args.heading;

  msfsim::trace::NoiseModel noise = args.noise;
  noise.seed = args.seed;
  if (args.noise_free) {
    noise.gps_pos_sigma = 0.0;
    noise.lidar_pos_sigma = 0.0;
    noise.imu_accel_sigma = 0.0;
    noise.imu_gyro_sigma = 0.0;
  }

  msfsim::trace::Trace t = msfsim::trace::generate_synthetic_trace(args.duration, scenario, noise);
  if (!args.unconfident_specs.empty()) {
    std::vector<msfsim::trace::UnconfidentPeriod> periods;
    for (const auto& spec : args.unconfident_specs) periods.push_back(parse_period_spec(spec));
    t = msfsim::trace::inject_unconfident_periods(t, periods, args.inject_seed);
  }
  msfsim::trace::write_trace(t, args.out_path);
  std::cout << "wrote " << t.events.size() << " events to " << args.out_path << "\n";
  return kExitOk;
}

int cmd_run(const std::string& config_path, bool force_profile) {
  msfsim::experiment::ExperimentConfig cfg =
      msfsim::experiment::parse_experiment_config(config_path);
  if (force_profile) cfg.experiment = msfsim::experiment::ExperimentKind::kProfile;
  const std::string hash = msfsim::experiment::file_hash(config_path);
  msfsim::experiment::run_experiment(cfg, hash);
  std::cout << "experiment '" << msfsim::experiment::experiment_name(cfg.experiment)
            << "' finished; reports in " << cfg.output_dir << "\n";
  return kExitOk;
}

int cmd_report(const std::string& outcomes_path, double goal, double min_duration,
               const std::string& out_prefix) {
  std::ifstream in(outcomes_path);
  if (!in) throw msfsim::ValidationError("report: cannot open " + outcomes_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto records = msfsim::experiment::records_from_jsonl(buffer.str());
  if (records.empty()) throw msfsim::ValidationError("report: no records in " + outcomes_path);
  if (!records.front().outcome.success.empty()) {
    bool recorded = false;
    for (const auto& [recorded_goal, t] : records.front().outcome.success) {
      if (std::abs(recorded_goal - goal) <= 1e-9) recorded = true;
    }
    if (!recorded) {
      throw msfsim::ValidationError(
          "report: goal was not recorded in the outcomes file; re-run the experiment with it");
    }
  }
  const auto report = msfsim::analysis::success_metrics(records, goal, min_duration);
  {
    std::ofstream json_out(out_prefix + ".json");
    json_out << msfsim::analysis::success_report_to_json(report) << "\n";
  }
  {
    std::ofstream csv_out(out_prefix + ".csv");
    csv_out << msfsim::analysis::success_report_to_csv(report);
  }
  std::cout << "best (d, f) = (" << report.best.d << ", " << report.best.f
            << "), success rate " << report.best.success_rate << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPS-spoofing attack workbench for KF-based multi-sensor fusion localization"};
  app.set_version_flag("--version", msfsim::kVersion);
  app.require_subcommand(1);

  GenTraceArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-trace", "Synthesize a sensor trace (JSONL)");
  gen_cmd->add_option("--duration", gen.duration, "Trace duration, seconds");
  gen_cmd->add_option("--speed-mph", gen.speed_mph, "Vehicle speed, mph");
  gen_cmd->add_option("--speed-mps", gen.speed_mps, "Vehicle speed, m/s (overrides --speed-mph)");
  gen_cmd->add_option("--heading", gen.heading, "Heading, radians");
  gen_cmd->add_option("--seed", gen.seed, "Noise seed");
  gen_cmd->add_option("--gps-sigma", gen.noise.gps_pos_sigma, "GPS position noise, m");
  gen_cmd->add_option("--lidar-sigma", gen.noise.lidar_pos_sigma, "LiDAR position noise, m");
  gen_cmd->add_option("--imu-accel-sigma", gen.noise.imu_accel_sigma, "IMU accel noise, m/s^2");
  gen_cmd->add_option("--imu-gyro-sigma", gen.noise.imu_gyro_sigma, "IMU gyro noise, rad/s");
  gen_cmd->add_option("--gps-var", gen.noise.gps_var_nominal, "Reported GPS variance, m^2");
  gen_cmd->add_option("--lidar-var", gen.noise.lidar_var_nominal, "Reported LiDAR variance, m^2");
  gen_cmd->add_flag("--noise-free", gen.noise_free, "Zero all sensor noise");
  gen_cmd->add_option("--unconfident", gen.unconfident_specs,
                      "Degraded-LiDAR period start:end:var_scale:bias_sigma (repeatable)");
  gen_cmd->add_option("--inject-seed", gen.inject_seed, "Seed for period bias draws");
  gen_cmd->add_option("-o,--out", gen.out_path, "Output path (.jsonl or .jsonl.gz)");

  std::string run_config;
  CLI::App* run_cmd = app.add_subcommand("run", "Run an experiment campaign from a YAML config");
  run_cmd->add_option("-c,--config", run_config, "Experiment config path")->required();

  std::string profile_config;
  CLI::App* profile_cmd =
      app.add_subcommand("profile", "Run offline attack-parameter profiling from a YAML config");
  profile_cmd->add_option("-c,--config", profile_config, "Experiment config path")->required();

  std::string report_outcomes, report_prefix = "success_report";
  double report_goal = 0.895, report_min_duration = 120.0;
  CLI::App* report_cmd =
      app.add_subcommand("report", "Recompute a success report from an outcomes JSONL file");
  report_cmd->add_option("-i,--outcomes", report_outcomes, "outcomes_*.jsonl path")->required();
  report_cmd->add_option("--goal", report_goal, "Required deviation, m");
  report_cmd->add_option("--min-duration", report_min_duration, "Minimum attack duration, s");
  report_cmd->add_option("--out-prefix", report_prefix, "Output prefix for .json/.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_trace(gen);
    if (run_cmd->parsed()) return cmd_run(run_config, false);
    if (profile_cmd->parsed()) return cmd_run(profile_config, true);
    if (report_cmd->parsed()) {
      return cmd_report(report_outcomes, report_goal, report_min_duration, report_prefix);
    }
  } catch (const msfsim::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const msfsim::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const msfsim::ArgumentError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
