#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msfsim/analysis.hpp"
#include "msfsim/attack.hpp"
#include "msfsim/kf.hpp"
#include "msfsim/profiler.hpp"
#include "msfsim/trace.hpp"
#include "msfsim/vehicle.hpp"

namespace msfsim::experiment {

enum class ExperimentKind {
  kUpperBound,
  kRipperGrid,
  kAblation,
  kRandomBaseline,
  kRobustness,
  kClosedLoop,
  kProfile,
};

const char* experiment_name(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kRipperGrid;
  std::vector<std::string> trace_paths;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int parallelism = 0;  // 0 = all cores

  kf::KfConfig kf;
  analysis::RoadGeometry geometry = analysis::local_road();

  // Attack sweep settings.
  std::vector<double> grid_d;
  std::vector<double> grid_f;
  double trigger_threshold = 0.295;
  double min_duration = 120.0;
  std::optional<double> attack_d;  // fixed parameters (robustness / closed loop)
  std::optional<double> attack_f;
  double random_range = 10.0;
  int random_trials = 30;

  // Robustness sweep.
  std::vector<double> error_multipliers = {1.0, 2.0, 3.0};
  int robustness_reps = 100;
  double error_pos_sigma = 0.058;
  double error_var_sigma = 0.008;

  vehicle::ControllerConfig controller;
  profiler::ProfilingConfig profiling;

  // Upper-bound scan.
  int window_points = 10;
  bool strip_lidar = false;
};

// Parse and validate a YAML experiment config; throws ValidationError with the
// offending field path.
ExperimentConfig parse_experiment_config(const std::string& path);

// Load the tuned filter defaults shipped with the repository
// (configs/default.yaml); falls back to built-in values if absent.
kf::KfConfig default_kf_config();

// Executes a campaign and writes its report files plus a run manifest under
// cfg.output_dir. Partial outputs are removed when a step fails.
void run_experiment(const ExperimentConfig& cfg, const std::string& config_hash);

// --- building blocks shared with the test suites ---

struct GridOptions {
  std::vector<double> grid_d;
  std::vector<double> grid_f;
  bool both_sides = true;
  double min_duration = 120.0;
  double trigger_threshold = 0.295;
  attack::SpoofSchedule::Kind kind = attack::SpoofSchedule::Kind::kRipper;
  std::optional<attack::SpoofErrorModel> spoof_error;  // seed is mixed per run
  std::vector<double> goals;
  double stop_abs_dev = 4.0;  // past every road goal
  int parallelism = 0;
  bool keep_series = false;   // keep full deviation series on each record
};

// GPS epochs with at least min_duration of trace left after them.
std::vector<double> eligible_starts(const attack::BaselineCache& cache, double min_duration);

// Sweep of independent attack runs over (d, f, side, start).
std::vector<analysis::AttackRunRecord> run_attack_grid(const attack::BaselineCache& cache,
                                                       const GridOptions& options);

std::string records_to_jsonl(const std::vector<analysis::AttackRunRecord>& records);
std::vector<analysis::AttackRunRecord> records_from_jsonl(const std::string& jsonl);

// FNV-1a over a file's bytes, hex-encoded; stamped into run manifests.
std::string file_hash(const std::string& path);

}  // namespace msfsim::experiment
