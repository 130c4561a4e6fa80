#include "msfsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "msfsim/errors.hpp"
#include "msfsim/parallel.hpp"
#include "msfsim/rng.hpp"
#include "msfsim/version.hpp"

namespace msfsim::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

const char* experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kUpperBound: return "upper_bound";
    case ExperimentKind::kRipperGrid: return "ripper_grid";
    case ExperimentKind::kAblation: return "ablation";
    case ExperimentKind::kRandomBaseline: return "random_baseline";
    case ExperimentKind::kRobustness: return "robustness";
    case ExperimentKind::kClosedLoop: return "closed_loop";
    case ExperimentKind::kProfile: return "profile";
  }
  return "unknown";
}

namespace {

std::string format_double_key(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> arange(double lo, double hi, double step) {
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double v = lo + step * i;
    if (v > hi + 1e-9) break;
    out.push_back(v);
  }
  return out;
}

ExperimentKind parse_kind(const std::string& name) {
  if (name == "upper_bound") return ExperimentKind::kUpperBound;
  if (name == "ripper_grid") return ExperimentKind::kRipperGrid;
  if (name == "ablation") return ExperimentKind::kAblation;
  if (name == "random_baseline") return ExperimentKind::kRandomBaseline;
  if (name == "robustness") return ExperimentKind::kRobustness;
  if (name == "closed_loop") return ExperimentKind::kClosedLoop;
  if (name == "profile") return ExperimentKind::kProfile;
  throw ValidationError("experiment: unknown experiment name '" + name + "'");
}

double node_double(const YAML::Node& n, const std::string& path) {
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    throw ValidationError(path + ": expected a number");
  }
}

std::vector<double> node_doubles(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ValidationError(path + ": expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    out.push_back(node_double(n[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Vec5 node_vec5(const YAML::Node& n, const std::string& path) {
  const auto values = node_doubles(n, path);
  if (values.size() != 5) throw ValidationError(path + ": expected 5 entries");
  Vec5 v;
  for (int i = 0; i < 5; ++i) v(i) = values[i];
  return v;
}

void apply_kf_yaml(const YAML::Node& node, const std::string& path, kf::KfConfig* config) {
  if (!node.IsDefined()) return;
  if (node["process_noise"]) {
    config->process_noise = node_vec5(node["process_noise"], path + ".process_noise").asDiagonal();
  }
  if (node["init_variance"]) {
    config->init_variance = node_vec5(node["init_variance"], path + ".init_variance");
  }
  if (node["chi2_threshold"]) {
    config->chi2_threshold = node_double(node["chi2_threshold"], path + ".chi2_threshold");
    if (!(config->chi2_threshold > 0.0)) throw ValidationError(path + ".chi2_threshold: must be > 0");
  }
  if (node["outlier_policy"]) {
    const auto policy = node["outlier_policy"].as<std::string>();
    if (policy == "discard") {
      config->outlier_policy = kf::OutlierPolicy::kDiscard;
    } else if (policy == "partial") {
      config->outlier_policy = kf::OutlierPolicy::kPartial;
    } else {
      throw ValidationError(path + ".outlier_policy: expected 'discard' or 'partial'");
    }
  }
  if (node["partial_weight"]) {
    config->partial_weight = node_double(node["partial_weight"], path + ".partial_weight");
    if (!(config->partial_weight > 0.0 && config->partial_weight < 1.0)) {
      throw ValidationError(path + ".partial_weight: must be in (0, 1)");
    }
  }
}

std::vector<double> grid_from_yaml(const YAML::Node& attack, const char* axis,
                                   const std::string& path, std::vector<double> fallback) {
  const std::string list_key = std::string("grid_") + axis;
  if (attack[list_key]) return node_doubles(attack[list_key], path + "." + list_key);
  const std::string from_key = std::string(axis) + "_from";
  const std::string to_key = std::string(axis) + "_to";
  const std::string step_key = std::string(axis) + "_step";
  if (attack[from_key] || attack[to_key] || attack[step_key]) {
    if (!attack[from_key] || !attack[to_key] || !attack[step_key]) {
      throw ValidationError(path + ": " + from_key + "/" + to_key + "/" + step_key +
                            " must be given together");
    }
    return arange(node_double(attack[from_key], path + "." + from_key),
                  node_double(attack[to_key], path + "." + to_key),
                  node_double(attack[step_key], path + "." + step_key));
  }
  return fallback;
}

}  // namespace

kf::KfConfig default_kf_config() {
  kf::KfConfig config;
  const fs::path path = fs::path(MSFSIM_SOURCE_DIR) / "configs" / "default.yaml";
  if (fs::exists(path)) {
    YAML::Node root = YAML::LoadFile(path.string());
    apply_kf_yaml(root["kf"], "kf", &config);
  }
  return config;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  if (!fs::exists(path)) throw ValidationError("config: file not found: " + path);
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: YAML parse error: ") + e.what());
  }

  ExperimentConfig cfg;
  cfg.kf = default_kf_config();
  cfg.grid_d = arange(0.3, 2.0, 0.1);
  cfg.grid_f = arange(1.1, 2.0, 0.1);

  if (!root["experiment"]) throw ValidationError("experiment: missing");
  cfg.experiment = parse_kind(root["experiment"].as<std::string>());

  if (!root["traces"] || !root["traces"].IsSequence() || root["traces"].size() == 0) {
    throw ValidationError("traces: expected a non-empty list of trace paths");
  }
  for (std::size_t i = 0; i < root["traces"].size(); ++i) {
    const auto p = root["traces"][i].as<std::string>();
    if (!fs::exists(p)) {
      throw ValidationError("traces[" + std::to_string(i) + "]: file not found: " + p);
    }
    cfg.trace_paths.push_back(p);
  }
  if (root["output_dir"]) cfg.output_dir = root["output_dir"].as<std::string>();
  if (root["seed"]) cfg.seed = root["seed"].as<std::uint64_t>();
  if (root["parallelism"]) cfg.parallelism = root["parallelism"].as<int>();
  if (root["road"]) {
    const auto road = root["road"].as<std::string>();
    if (road == "local") {
      cfg.geometry = analysis::local_road();
    } else if (road == "highway") {
      cfg.geometry = analysis::highway_road();
    } else {
      throw ValidationError("road: expected 'local' or 'highway'");
    }
  }

  apply_kf_yaml(root["kf"], "kf", &cfg.kf);

  if (const YAML::Node attack = root["attack"]; attack.IsDefined()) {
    cfg.grid_d = grid_from_yaml(attack, "d", "attack", cfg.grid_d);
    cfg.grid_f = grid_from_yaml(attack, "f", "attack", cfg.grid_f);
    if (attack["trigger_threshold"]) {
      cfg.trigger_threshold = node_double(attack["trigger_threshold"], "attack.trigger_threshold");
    }
    if (attack["min_duration"]) {
      cfg.min_duration = node_double(attack["min_duration"], "attack.min_duration");
    }
    if (attack["d"]) cfg.attack_d = node_double(attack["d"], "attack.d");
    if (attack["f"]) cfg.attack_f = node_double(attack["f"], "attack.f");
    if (attack["random_range"]) {
      cfg.random_range = node_double(attack["random_range"], "attack.random_range");
    }
    if (attack["random_trials"]) cfg.random_trials = attack["random_trials"].as<int>();
  }
  if (cfg.grid_d.empty() || cfg.grid_f.empty()) {
    throw ValidationError("attack: empty parameter grid");
  }
  if (!(cfg.min_duration > 0.0)) throw ValidationError("attack.min_duration: must be > 0");

  if (const YAML::Node rb = root["robustness"]; rb.IsDefined()) {
    if (rb["multipliers"]) {
      cfg.error_multipliers = node_doubles(rb["multipliers"], "robustness.multipliers");
    }
    if (rb["reps"]) cfg.robustness_reps = rb["reps"].as<int>();
    if (rb["pos_sigma"]) cfg.error_pos_sigma = node_double(rb["pos_sigma"], "robustness.pos_sigma");
    if (rb["var_sigma"]) cfg.error_var_sigma = node_double(rb["var_sigma"], "robustness.var_sigma");
  }

  if (const YAML::Node ctrl = root["controller"]; ctrl.IsDefined()) {
    if (ctrl["gain_lateral"]) {
      cfg.controller.gain_lateral = node_double(ctrl["gain_lateral"], "controller.gain_lateral");
    }
    if (ctrl["gain_heading"]) {
      cfg.controller.gain_heading = node_double(ctrl["gain_heading"], "controller.gain_heading");
    }
    if (ctrl["steering_ratio"]) {
      cfg.controller.steering_ratio =
          node_double(ctrl["steering_ratio"], "controller.steering_ratio");
    }
    if (ctrl["cycle_time"]) {
      cfg.controller.cycle_time = node_double(ctrl["cycle_time"], "controller.cycle_time");
    }
    if (ctrl["max_steering"]) {
      cfg.controller.max_steering = node_double(ctrl["max_steering"], "controller.max_steering");
    }
  }

  if (const YAML::Node prof = root["profiling"]; prof.IsDefined()) {
    cfg.profiling.grid_d = cfg.grid_d;
    cfg.profiling.grid_f = cfg.grid_f;
    if (prof["trials_per_round"]) cfg.profiling.trials_per_round = prof["trials_per_round"].as<int>();
    if (prof["min_success_rate"]) {
      cfg.profiling.min_success_rate =
          node_double(prof["min_success_rate"], "profiling.min_success_rate");
    }
    if (prof["safe_threshold"]) {
      cfg.profiling.safe_threshold = node_double(prof["safe_threshold"], "profiling.safe_threshold");
    }
    if (prof["trial_cap"]) {
      cfg.profiling.trial_cap = node_double(prof["trial_cap"], "profiling.trial_cap");
    }
  } else {
    cfg.profiling.grid_d = cfg.grid_d;
    cfg.profiling.grid_f = cfg.grid_f;
  }

  if (const YAML::Node ub = root["upper_bound"]; ub.IsDefined()) {
    if (ub["window_points"]) cfg.window_points = ub["window_points"].as<int>();
    if (ub["strip_lidar"]) cfg.strip_lidar = ub["strip_lidar"].as<bool>();
  }

  // Environment overrides: output location and fan-out only.
  if (const char* dir = std::getenv("MSFSIM_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
    cfg.output_dir = dir;
  }
  if (const char* par = std::getenv("MSFSIM_PARALLELISM"); par != nullptr && *par != '\0') {
    cfg.parallelism = std::atoi(par);
  }
  return cfg;
}

std::vector<double> eligible_starts(const attack::BaselineCache& cache, double min_duration) {
  std::vector<double> starts;
  const double end = cache.get_trace().end_time();
  for (std::size_t i = 0; i < cache.epoch_count(); ++i) {
    const double t = cache.epochs()[i].time;
    if (t + min_duration <= end + 1e-9) starts.push_back(t);
  }
  return starts;
}

std::vector<analysis::AttackRunRecord> run_attack_grid(const attack::BaselineCache& cache,
                                                       const GridOptions& options) {
  const std::vector<double> starts = eligible_starts(cache, options.min_duration);
  if (starts.empty()) {
    throw ArgumentError("run_attack_grid: no start point leaves min_duration of trace");
  }
  std::vector<attack::Side> sides{attack::Side::kLeft};
  if (options.both_sides) sides.push_back(attack::Side::kRight);

  struct Task {
    double d, f, start;
    attack::Side side;
  };
  std::vector<Task> tasks;
  tasks.reserve(options.grid_d.size() * options.grid_f.size() * sides.size() * starts.size());
  for (double d : options.grid_d) {
    for (double f : options.grid_f) {
      for (attack::Side side : sides) {
        for (double start : starts) tasks.push_back({d, f, start, side});
      }
    }
  }

  const Vec2 median_var = trace::median_gps_uncertainty(cache.get_trace());
  std::vector<analysis::AttackRunRecord> records(tasks.size());
  parallel_for(tasks.size(), options.parallelism, [&](std::size_t i) {
    const Task& task = tasks[i];
    attack::SpoofSchedule sched;
    sched.kind = options.kind;
    sched.d = task.d;
    sched.f = task.f;
    sched.trigger_threshold = options.trigger_threshold;

    attack::RunOptions run;
    run.side = task.side;
    run.spoof_variance = median_var;
    run.max_duration = options.min_duration;
    run.goals = options.goals;
    run.stop_abs_dev = options.stop_abs_dev;
    if (options.spoof_error.has_value()) {
      attack::SpoofErrorModel model = *options.spoof_error;
      model.seed = mix_seed(model.seed, i);
      run.spoof_error = model;
    }

    attack::AttackOutcome outcome = attack::run_attack(cache, task.start, sched, run);
    if (!options.keep_series) {
      outcome.deviation_series.clear();
      outcome.deviation_series.shrink_to_fit();
      outcome.spoof_log.clear();
      outcome.spoof_log.shrink_to_fit();
      outcome.epoch_deviations.clear();
      outcome.epoch_deviations.shrink_to_fit();
    }
    records[i] = {task.d, task.f, task.side, task.start, std::move(outcome)};
  });
  return records;
}

std::string records_to_jsonl(const std::vector<analysis::AttackRunRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    json j;
    j["d"] = rec.d;
    j["f"] = rec.f;
    j["side"] = attack::side_name(rec.side);
    j["start"] = rec.start_time;
    j["end_time"] = rec.outcome.end_time;
    j["max_deviation"] = rec.outcome.max_deviation;
    j["fitted_base"] = rec.outcome.fitted_base;
    if (rec.outcome.stage2_time.has_value()) {
      j["stage2_time"] = *rec.outcome.stage2_time;
    } else {
      j["stage2_time"] = nullptr;
    }
    json succ = json::object();
    for (const auto& [goal, t] : rec.outcome.success) {
      if (t.has_value()) {
        succ[format_double_key(goal)] = *t;
      } else {
        succ[format_double_key(goal)] = nullptr;
      }
    }
    j["success"] = succ;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<analysis::AttackRunRecord> records_from_jsonl(const std::string& jsonl) {
  std::vector<analysis::AttackRunRecord> records;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("outcomes: invalid JSON", line_no);
    analysis::AttackRunRecord rec;
    rec.d = j.at("d").get<double>();
    rec.f = j.at("f").get<double>();
    rec.side = j.at("side").get<std::string>() == "left" ? attack::Side::kLeft
                                                         : attack::Side::kRight;
    rec.start_time = j.at("start").get<double>();
    rec.outcome.start_time = rec.start_time;
    rec.outcome.end_time = j.value("end_time", rec.start_time);
    rec.outcome.max_deviation = j.value("max_deviation", 0.0);
    rec.outcome.fitted_base = j.value("fitted_base", 1.0);
    if (j.contains("stage2_time") && !j["stage2_time"].is_null()) {
      rec.outcome.stage2_time = j["stage2_time"].get<double>();
    }
    if (j.contains("success")) {
      for (const auto& [key, value] : j["success"].items()) {
        const double goal = std::strtod(key.c_str(), nullptr);
        if (value.is_null()) {
          rec.outcome.success[goal] = std::nullopt;
        } else {
          rec.outcome.success[goal] = value.get<double>();
        }
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("file_hash: cannot open " + path);
  std::uint64_t hash = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

namespace {

// Tracks files written by one campaign so a failed run leaves nothing behind.
class OutputSet {
 public:
  explicit OutputSet(const fs::path& dir) : dir_(dir) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open output file " + path.string());
    out << content;
    if (!out) throw Error("write failed for " + path.string());
    names_.push_back(name);
  }

  void remove_all() {
    for (const auto& name : names_) {
      std::error_code ec;
      fs::remove(dir_ / name, ec);
    }
    names_.clear();
  }

  const std::vector<std::string>& names() const { return names_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

struct LoadedTrace {
  std::string path;
  trace::Trace data;
};

std::vector<LoadedTrace> load_traces(const ExperimentConfig& cfg) {
  std::vector<LoadedTrace> out;
  for (const auto& path : cfg.trace_paths) {
    out.push_back({path, trace::read_trace(path)});
    if (cfg.strip_lidar && cfg.experiment == ExperimentKind::kUpperBound) {
      out.back().data = trace::without_lidar(out.back().data);
    }
  }
  return out;
}

GridOptions grid_options_from(const ExperimentConfig& cfg) {
  GridOptions opts;
  opts.grid_d = cfg.grid_d;
  opts.grid_f = cfg.grid_f;
  opts.min_duration = cfg.min_duration;
  opts.trigger_threshold = cfg.trigger_threshold;
  opts.parallelism = cfg.parallelism;
  const auto goals = analysis::goal_thresholds(cfg.geometry);
  opts.goals = {goals.off_road, goals.wrong_way};
  opts.stop_abs_dev = goals.wrong_way * 1.25;
  return opts;
}

std::pair<double, double> best_attack_params(const ExperimentConfig& cfg,
                                             const attack::BaselineCache& cache, double goal) {
  if (cfg.attack_d.has_value() && cfg.attack_f.has_value()) {
    return {*cfg.attack_d, *cfg.attack_f};
  }
  const auto records = run_attack_grid(cache, grid_options_from(cfg));
  const auto report = analysis::success_metrics(records, goal, cfg.min_duration);
  return {report.best.d, report.best.f};
}

double rate_for_goal(const std::vector<analysis::AttackRunRecord>& records, double goal,
                     double min_duration) {
  return analysis::success_metrics(records, goal, min_duration).best.success_rate;
}

void run_upper_bound(const ExperimentConfig& cfg, OutputSet& out) {
  json summary = json::array();
  const auto traces = load_traces(cfg);
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    attack::BaselineCache cache(traces[ti].data, cfg.kf);
    const std::size_t n_windows =
        cache.epoch_count() >= static_cast<std::size_t>(cfg.window_points)
            ? cache.epoch_count() - cfg.window_points + 1
            : 0;
    if (n_windows == 0) throw ArgumentError("upper_bound: trace shorter than one window");

    std::vector<attack::WindowSearchResult> results(n_windows);
    attack::WindowSearchOptions options;
    options.n_points = cfg.window_points;
    parallel_for(n_windows, cfg.parallelism, [&](std::size_t w) {
      results[w] = attack::exhaustive_window_search(cache, cache.epochs()[w].time, options);
    });

    std::string jsonl;
    std::ostringstream csv;
    csv.precision(10);
    csv << "window_start,max_deviation,fitted_base\n";
    double overall_max = 0.0;
    std::size_t takeover_windows = 0;
    for (std::size_t w = 0; w < n_windows; ++w) {
      const auto& res = results[w];
      json j;
      j["window_start"] = cache.epochs()[w].time;
      j["max_deviation"] = res.outcome.max_deviation;
      j["fitted_base"] = res.outcome.fitted_base;
      j["deviations"] = res.deviations;
      j["deltas"] = res.deltas;
      jsonl += j.dump();
      jsonl += '\n';
      csv << cache.epochs()[w].time << ',' << res.outcome.max_deviation << ','
          << res.outcome.fitted_base << '\n';
      overall_max = std::max(overall_max, res.outcome.max_deviation);
      if (res.outcome.fitted_base > analysis::kTakeoverBaseThreshold) ++takeover_windows;
    }
    const std::string tag = std::to_string(ti);
    out.write("windows_" + tag + ".jsonl", jsonl);
    out.write("windows_" + tag + ".csv", csv.str());
    summary.push_back({{"trace", traces[ti].path},
                       {"windows", n_windows},
                       {"max_deviation", overall_max},
                       {"takeover_windows", takeover_windows}});
  }
  out.write("summary.json", summary.dump(2) + "\n");
}

void write_success_reports(const ExperimentConfig& cfg,
                           const std::vector<analysis::AttackRunRecord>& records,
                           const std::string& tag, OutputSet& out) {
  const auto goals = analysis::goal_thresholds(cfg.geometry);
  const struct {
    const char* name;
    double goal;
  } kGoals[] = {{"offroad", goals.off_road}, {"wrongway", goals.wrong_way}};
  for (const auto& g : kGoals) {
    const auto report = analysis::success_metrics(records, g.goal, cfg.min_duration);
    out.write("success_" + std::string(g.name) + "_" + tag + ".json",
              analysis::success_report_to_json(report) + "\n");
    out.write("success_" + std::string(g.name) + "_" + tag + ".csv",
              analysis::success_report_to_csv(report));
  }
}

void run_ripper_grid(const ExperimentConfig& cfg, OutputSet& out) {
  const auto traces = load_traces(cfg);
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    attack::BaselineCache cache(traces[ti].data, cfg.kf);
    const auto records = run_attack_grid(cache, grid_options_from(cfg));
    const std::string tag = std::to_string(ti);
    out.write("outcomes_" + tag + ".jsonl", records_to_jsonl(records));
    write_success_reports(cfg, records, tag, out);
  }
}

void run_ablation(const ExperimentConfig& cfg, OutputSet& out) {
  const auto traces = load_traces(cfg);
  const auto goals = analysis::goal_thresholds(cfg.geometry);
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    attack::BaselineCache cache(traces[ti].data, cfg.kf);
    const struct {
      const char* name;
      attack::SpoofSchedule::Kind kind;
      bool d_only;
    } kVariants[] = {
        {"full", attack::SpoofSchedule::Kind::kRipper, false},
        {"stage1_only", attack::SpoofSchedule::Kind::kConstant, true},
        {"stage2_only", attack::SpoofSchedule::Kind::kExponential, false},
    };
    std::ostringstream csv;
    csv.precision(10);
    csv << "variant,goal,goal_m,best_d,best_f,success_rate,mean_success_time\n";
    json jout = json::array();
    for (const auto& variant : kVariants) {
      GridOptions opts = grid_options_from(cfg);
      opts.kind = variant.kind;
      if (variant.d_only) opts.grid_f = {cfg.grid_f.front()};
      const auto records = run_attack_grid(cache, opts);
      const struct {
        const char* name;
        double goal;
      } kGoals[] = {{"offroad", goals.off_road}, {"wrongway", goals.wrong_way}};
      for (const auto& g : kGoals) {
        const auto report = analysis::success_metrics(records, g.goal, cfg.min_duration);
        csv << variant.name << ',' << g.name << ',' << g.goal << ',' << report.best.d << ','
            << report.best.f << ',' << report.best.success_rate << ','
            << report.best.mean_success_time << '\n';
        jout.push_back({{"variant", variant.name},
                        {"goal", g.name},
                        {"goal_m", g.goal},
                        {"best_d", report.best.d},
                        {"best_f", report.best.f},
                        {"success_rate", report.best.success_rate},
                        {"mean_success_time", report.best.mean_success_time}});
      }
    }
    const std::string tag = std::to_string(ti);
    out.write("ablation_" + tag + ".csv", csv.str());
    out.write("ablation_" + tag + ".json", jout.dump(2) + "\n");
  }
}

void run_random_baseline(const ExperimentConfig& cfg, OutputSet& out) {
  const auto traces = load_traces(cfg);
  const auto goals = analysis::goal_thresholds(cfg.geometry);
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    attack::BaselineCache cache(traces[ti].data, cfg.kf);
    const auto starts = eligible_starts(cache, cfg.min_duration);
    if (starts.empty()) throw ArgumentError("random_baseline: no eligible start points");

    struct Task {
      int trial;
      std::size_t start_idx;
      attack::Side side;
    };
    std::vector<Task> tasks;
    for (int trial = 0; trial < cfg.random_trials; ++trial) {
      for (std::size_t s = 0; s < starts.size(); ++s) {
        tasks.push_back({trial, s, attack::Side::kLeft});
        tasks.push_back({trial, s, attack::Side::kRight});
      }
    }
    std::vector<attack::AttackOutcome> outcomes(tasks.size());
    attack::RunOptions base;
    base.spoof_variance = trace::median_gps_uncertainty(cache.get_trace());
    base.max_duration = cfg.min_duration;
    base.goals = {goals.off_road, goals.wrong_way};
    base.stop_abs_dev = goals.wrong_way * 1.25;
    parallel_for(tasks.size(), cfg.parallelism, [&](std::size_t i) {
      attack::RunOptions run = base;
      run.side = tasks[i].side;
      outcomes[i] = attack::random_attack(cache, starts[tasks[i].start_idx], cfg.random_range,
                                          mix_seed(cfg.seed, i), &run);
      outcomes[i].deviation_series.clear();
      outcomes[i].spoof_log.clear();
    });

    json per_goal = json::object();
    const std::pair<const char*, double> kGoalList[] = {{"offroad", goals.off_road},
                                                        {"wrongway", goals.wrong_way}};
    for (const auto& [goal_name, goal] : kGoalList) {
      std::vector<double> trial_rates;
      for (int trial = 0; trial < cfg.random_trials; ++trial) {
        std::size_t successes = 0;
        for (std::size_t s = 0; s < starts.size(); ++s) {
          bool ok = false;
          for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (tasks[i].trial != trial || tasks[i].start_idx != s) continue;
            const auto it = outcomes[i].success.find(goal);
            if (it != outcomes[i].success.end() && it->second.has_value() &&
                *it->second <= cfg.min_duration) {
              ok = true;
              break;
            }
          }
          if (ok) ++successes;
        }
        trial_rates.push_back(static_cast<double>(successes) / starts.size());
      }
      double mean = 0.0;
      for (double r : trial_rates) mean += r;
      mean /= trial_rates.empty() ? 1.0 : static_cast<double>(trial_rates.size());
      per_goal[goal_name] = {{"mean_rate", mean}, {"trial_rates", trial_rates}};
    }
    json j = {{"trace", traces[ti].path},
              {"trials", cfg.random_trials},
              {"range_max", cfg.random_range},
              {"starts", starts.size()},
              {"goals", per_goal}};
    out.write("random_baseline_" + std::to_string(ti) + ".json", j.dump(2) + "\n");
  }
}

void run_robustness(const ExperimentConfig& cfg, OutputSet& out) {
  const auto traces = load_traces(cfg);
  const auto goals = analysis::goal_thresholds(cfg.geometry);
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    attack::BaselineCache cache(traces[ti].data, cfg.kf);
    const auto [best_d, best_f] = best_attack_params(cfg, cache, goals.off_road);

    GridOptions opts = grid_options_from(cfg);
    opts.grid_d = {best_d};
    opts.grid_f = {best_f};

    const auto clean_records = run_attack_grid(cache, opts);
    json j;
    j["trace"] = traces[ti].path;
    j["d"] = best_d;
    j["f"] = best_f;
    j["error_free"] = {{"offroad", rate_for_goal(clean_records, goals.off_road, cfg.min_duration)},
                       {"wrongway", rate_for_goal(clean_records, goals.wrong_way, cfg.min_duration)}};
    json sweeps = json::array();
    for (double multiplier : cfg.error_multipliers) {
      double sum_off = 0.0, sum_wrong = 0.0;
      for (int rep = 0; rep < cfg.robustness_reps; ++rep) {
        GridOptions noisy = opts;
        attack::SpoofErrorModel model;
        model.pos_sigma = cfg.error_pos_sigma;
        model.var_sigma = cfg.error_var_sigma;
        model.multiplier = multiplier;
        model.seed = mix_seed(cfg.seed, 1000 + rep);
        noisy.spoof_error = model;
        const auto records = run_attack_grid(cache, noisy);
        sum_off += rate_for_goal(records, goals.off_road, cfg.min_duration);
        sum_wrong += rate_for_goal(records, goals.wrong_way, cfg.min_duration);
      }
      sweeps.push_back({{"multiplier", multiplier},
                        {"reps", cfg.robustness_reps},
                        {"offroad_mean_rate", sum_off / cfg.robustness_reps},
                        {"wrongway_mean_rate", sum_wrong / cfg.robustness_reps}});
    }
    j["with_error"] = sweeps;
    out.write("robustness_" + std::to_string(ti) + ".json", j.dump(2) + "\n");
  }
}

void run_closed_loop(const ExperimentConfig& cfg, OutputSet& out) {
  const auto traces = load_traces(cfg);
  const auto goals = analysis::goal_thresholds(cfg.geometry);
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    attack::BaselineCache cache(traces[ti].data, cfg.kf);
    const auto [best_d, best_f] = best_attack_params(cfg, cache, goals.off_road);

    GridOptions opts = grid_options_from(cfg);
    opts.grid_d = {best_d};
    opts.grid_f = {best_f};
    const auto open_records = run_attack_grid(cache, opts);

    const auto starts = eligible_starts(cache, cfg.min_duration);
    struct Task {
      std::size_t start_idx;
      attack::Side side;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < starts.size(); ++s) {
      tasks.push_back({s, attack::Side::kLeft});
      tasks.push_back({s, attack::Side::kRight});
    }
    std::vector<analysis::AttackRunRecord> closed_records(tasks.size());
    std::vector<std::pair<double, double>> sample_series;
    attack::AttackConfig acfg;
    acfg.d = best_d;
    acfg.f = best_f;
    acfg.trigger_threshold = cfg.trigger_threshold;
    acfg.spoof_uncertainty = trace::median_gps_uncertainty(cache.get_trace());
    acfg.max_duration = cfg.min_duration;
    std::mutex sample_mutex;
    parallel_for(tasks.size(), cfg.parallelism, [&](std::size_t i) {
      attack::AttackConfig run_cfg = acfg;
      run_cfg.side = tasks[i].side;
      auto [outcome, physical] = attack::closed_loop_attack(cache, starts[tasks[i].start_idx],
                                                            run_cfg, cfg.controller);
      if (i == 0) {
        std::lock_guard<std::mutex> lock(sample_mutex);
        sample_series = physical;
      }
      outcome.deviation_series.clear();
      outcome.spoof_log.clear();
      closed_records[i] = {best_d, best_f, tasks[i].side, starts[tasks[i].start_idx],
                           std::move(outcome)};
    });

    json j;
    j["trace"] = traces[ti].path;
    j["d"] = best_d;
    j["f"] = best_f;
    j["open_loop"] = {{"offroad", rate_for_goal(open_records, goals.off_road, cfg.min_duration)},
                      {"wrongway", rate_for_goal(open_records, goals.wrong_way, cfg.min_duration)}};
    j["closed_loop"] = {
        {"offroad", rate_for_goal(closed_records, goals.off_road, cfg.min_duration)},
        {"wrongway", rate_for_goal(closed_records, goals.wrong_way, cfg.min_duration)}};
    out.write("closed_loop_" + std::to_string(ti) + ".json", j.dump(2) + "\n");

    std::ostringstream csv;
    csv.precision(10);
    csv << "t,physical_lateral_deviation\n";
    for (const auto& [t, dev] : sample_series) csv << t << ',' << dev << '\n';
    out.write("closed_loop_physical_" + std::to_string(ti) + ".csv", csv.str());
  }
}

void run_profile(const ExperimentConfig& cfg, OutputSet& out) {
  const auto traces = load_traces(cfg);
  std::vector<std::unique_ptr<attack::BaselineCache>> caches;
  std::vector<std::vector<double>> starts_per_trace;
  for (const auto& lt : traces) {
    caches.push_back(std::make_unique<attack::BaselineCache>(lt.data, cfg.kf));
    starts_per_trace.push_back(eligible_starts(*caches.back(), cfg.profiling.trial_cap));
    if (starts_per_trace.back().empty()) {
      throw ArgumentError("profile: trace shorter than the trial cap");
    }
  }

  Rng session(mix_seed(cfg.seed, 0x9f0f11e));
  const profiler::ProfilingConfig& pcfg = cfg.profiling;
  auto trial_runner = [&](double d, double f, int n, double threshold) -> int {
    (void)threshold;
    struct Draw {
      std::size_t trace_idx;
      double start;
      attack::Side side;
    };
    std::vector<Draw> draws(n);
    for (int i = 0; i < n; ++i) {
      const std::size_t t_idx = static_cast<std::size_t>(session.below(caches.size()));
      const auto& starts = starts_per_trace[t_idx];
      draws[i] = {t_idx, starts[session.below(starts.size())],
                  session.below(2) == 0 ? attack::Side::kLeft : attack::Side::kRight};
    }
    std::vector<char> ok(n, 0);
    parallel_for(static_cast<std::size_t>(n), cfg.parallelism, [&](std::size_t i) {
      ok[i] = profiler::safe_trial(*caches[draws[i].trace_idx], draws[i].start, d, f, pcfg,
                                   draws[i].side)
                  ? 1
                  : 0;
    });
    int count = 0;
    for (char c : ok) count += c;
    return count;
  };

  std::vector<profiler::ProfilingRound> rounds;
  const profiler::ProfilingResult result = profiler::offline_profile(trial_runner, pcfg, &rounds);

  json j = {{"d", result.d},
            {"f", result.f},
            {"cost", result.cost},
            {"best_rate", result.best_rate},
            {"exhausted", result.exhausted},
            {"trials_per_round", pcfg.trials_per_round},
            {"safe_threshold", pcfg.safe_threshold},
            {"min_success_rate", pcfg.min_success_rate}};
  out.write("profiling_result.json", j.dump(2) + "\n");

  std::ostringstream csv;
  csv.precision(10);
  csv << "d,f,success_count,rate\n";
  for (const auto& r : rounds) {
    csv << r.d << ',' << r.f << ',' << r.success_count << ',' << r.rate << '\n';
  }
  out.write("profiling_rounds.csv", csv.str());
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, const std::string& config_hash) {
  OutputSet out(cfg.output_dir);
  try {
    switch (cfg.experiment) {
      case ExperimentKind::kUpperBound: run_upper_bound(cfg, out); break;
      case ExperimentKind::kRipperGrid: run_ripper_grid(cfg, out); break;
      case ExperimentKind::kAblation: run_ablation(cfg, out); break;
      case ExperimentKind::kRandomBaseline: run_random_baseline(cfg, out); break;
      case ExperimentKind::kRobustness: run_robustness(cfg, out); break;
      case ExperimentKind::kClosedLoop: run_closed_loop(cfg, out); break;
      case ExperimentKind::kProfile: run_profile(cfg, out); break;
    }
    json manifest;
    manifest["tool_version"] = kVersion;
    manifest["experiment"] = experiment_name(cfg.experiment);
    manifest["config_hash"] = config_hash;
    manifest["seed"] = cfg.seed;
    manifest["traces"] = cfg.trace_paths;
    manifest["outputs"] = out.names();
    out.write("manifest.json", manifest.dump(2) + "\n");
  } catch (...) {
    out.remove_all();
    throw;
  }
}

}  // namespace msfsim::experiment
