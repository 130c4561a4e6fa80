#include "msfsim/attack.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "msfsim/analysis.hpp"
#include "msfsim/errors.hpp"

namespace msfsim::attack {

std::optional<double> success_time(const AttackOutcome& outcome, double goal) {
  for (const auto& [t, dev] : outcome.deviation_series) {
    if (std::abs(dev) >= goal) return t - outcome.start_time;
  }
  return std::nullopt;
}

std::vector<double> default_goals() {
  return {0.295, 0.745, 0.895, 1.945, 2.405, 2.855};
}

namespace {

// One filter advancing through trace events with zero-order-hold IMU.
struct FilterRunner {
  kf::MsfState state;
  const kf::KfConfig* config = nullptr;
  trace::ImuSample last_imu;

  void advance_to(double t) {
    const double dt = t - state.timestamp;
    if (dt <= 0.0) return;
    state = kf::predict(state, {last_imu.accel_body, last_imu.yaw_rate, dt}, *config);
  }
  void on_imu(double t, const trace::ImuSample& s) {
    last_imu = s;
    advance_to(t);
  }
  kf::KfStepLog on_measurement(const kf::Measurement& m) {
    advance_to(m.timestamp);
    auto [next, log] = kf::process_measurement(state, m, *config);
    state = next;
    return log;
  }
};

FilterRunner init_runner(const GroundTruthPose& pose, const kf::KfConfig& config) {
  FilterRunner runner;
  runner.config = &config;
  runner.state.position = pose.position;
  runner.state.velocity = pose.velocity;
  runner.state.heading = pose.heading;
  runner.state.timestamp = pose.timestamp;
  runner.state.covariance = config.init_variance.asDiagonal();
  return runner;
}

kf::Measurement to_measurement(double t, const trace::GpsFix& fix) {
  return {kf::Source::kGps, fix.position, fix.variance.asDiagonal(), t};
}

kf::Measurement to_measurement(double t, const trace::LidarFix& fix) {
  return {kf::Source::kLidar, fix.position, fix.variance.asDiagonal(), t};
}

// Signed lateral offset of a position from a reference pose, positive to the
// left of the reference heading.
double signed_lateral(const Vec2& pos, const Vec2& ref_pos, double ref_heading) {
  return left_normal(ref_heading).dot(pos - ref_pos);
}

double mean_variance(const Vec2& var) { return 0.5 * (var.x() + var.y()); }

}  // namespace

kf::Measurement apply_spoof_error(const kf::Measurement& meas, const SpoofErrorModel& model,
                                  Rng& rng) {
  if (meas.source != kf::Source::kGpsSpoofed) {
    throw ArgumentError("apply_spoof_error: measurement is not a spoofed fix");
  }
  kf::Measurement out = meas;
  const double radius = rng.gaussian(0.0, model.multiplier * model.pos_sigma);
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  out.position += radius * Vec2{std::cos(angle), std::sin(angle)};
  for (int i = 0; i < 2; ++i) {
    const double perturbed =
        out.uncertainty(i, i) + rng.gaussian(0.0, model.multiplier * model.var_sigma);
    out.uncertainty(i, i) = std::max(perturbed, 1e-12);
  }
  return out;
}

std::vector<std::pair<double, kf::MsfState>> run_baseline(const trace::Trace& t,
                                                          const kf::KfConfig& config) {
  std::vector<std::pair<double, kf::MsfState>> outputs;
  if (t.empty()) return outputs;

  FilterRunner runner;
  bool initialized = false;
  for (const auto& ev : t.events) {
    if (const auto* pose = std::get_if<GroundTruthPose>(&ev.payload)) {
      if (!initialized) {
        runner = init_runner(*pose, config);
        initialized = true;
      }
      continue;
    }
    if (!initialized) continue;
    if (const auto* imu = std::get_if<trace::ImuSample>(&ev.payload)) {
      runner.on_imu(ev.timestamp, *imu);
    } else if (const auto* lidar = std::get_if<trace::LidarFix>(&ev.payload)) {
      runner.on_measurement(to_measurement(ev.timestamp, *lidar));
      outputs.emplace_back(ev.timestamp, runner.state);
    } else if (const auto* gps = std::get_if<trace::GpsFix>(&ev.payload)) {
      runner.on_measurement(to_measurement(ev.timestamp, *gps));
      outputs.emplace_back(ev.timestamp, runner.state);
    }
  }
  if (!initialized) throw ArgumentError("run_baseline: trace has no truth events");
  return outputs;
}

BaselineCache::BaselineCache(const trace::Trace& t, const kf::KfConfig& config)
    : trace_(&t), config_(config) {
  if (t.empty()) throw ArgumentError("BaselineCache: empty trace");
  after_event_.resize(t.events.size());

  FilterRunner runner;
  bool initialized = false;
  GroundTruthPose current_truth;
  bool have_truth = false;

  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const auto& ev = t.events[i];
    if (const auto* pose = std::get_if<GroundTruthPose>(&ev.payload)) {
      current_truth = *pose;
      have_truth = true;
      if (!initialized) {
        runner = init_runner(*pose, config_);
        initialized = true;
      }
      continue;
    }
    if (!initialized) continue;
    if (const auto* imu = std::get_if<trace::ImuSample>(&ev.payload)) {
      runner.on_imu(ev.timestamp, *imu);
      continue;
    }
    if (const auto* gps = std::get_if<trace::GpsFix>(&ev.payload)) {
      runner.advance_to(ev.timestamp);
      EpochInfo info;
      info.event_index = i;
      info.time = ev.timestamp;
      info.state_before = runner.state;
      info.last_imu = runner.last_imu;
      info.truth = have_truth ? current_truth : GroundTruthPose{};
      epochs_.push_back(info);
      runner.on_measurement(to_measurement(ev.timestamp, *gps));
    } else if (const auto* lidar = std::get_if<trace::LidarFix>(&ev.payload)) {
      runner.on_measurement(to_measurement(ev.timestamp, *lidar));
    }
    after_event_[i] = BaselineAt{runner.state.position, runner.state.heading,
                                 runner.state.covariance.trace()};
    outputs_.emplace_back(ev.timestamp, runner.state);
  }
  if (!initialized) throw ArgumentError("BaselineCache: trace has no truth events");
  if (epochs_.empty()) throw ArgumentError("BaselineCache: trace has no GPS epochs");

  if (epochs_.size() >= 2) {
    gps_period_ = (epochs_.back().time - epochs_.front().time) /
                  static_cast<double>(epochs_.size() - 1);
  } else {
    gps_period_ = 1.0 / trace::kGpsRateHz;
  }

  // Sentinel epoch one GPS period past the last, for end-of-window scoring.
  FilterRunner tail = runner;
  EpochInfo sentinel;
  sentinel.event_index = t.events.size();
  sentinel.time = epochs_.back().time + gps_period_;
  tail.advance_to(sentinel.time);
  sentinel.state_before = tail.state;
  sentinel.last_imu = tail.last_imu;
  sentinel.truth = have_truth ? current_truth : GroundTruthPose{};
  epochs_.push_back(sentinel);
}

std::size_t BaselineCache::epoch_index_at(double start_time) const {
  for (std::size_t i = 0; i + 1 < epochs_.size(); ++i) {
    if (std::abs(epochs_[i].time - start_time) <= 1e-6) return i;
  }
  throw ArgumentError("attack: start_time does not coincide with a GPS epoch");
}

const BaselineCache::BaselineAt* BaselineCache::after_event(std::size_t event_index) const {
  if (event_index >= after_event_.size() || !after_event_[event_index].has_value()) return nullptr;
  return &*after_event_[event_index];
}

namespace {

// Mutable schedule state for one run.
struct ScheduleState {
  const SpoofSchedule* sched;
  Rng rng;
  bool stage2 = false;
  int stage2_index = 0;
  int epoch_index = 0;

  explicit ScheduleState(const SpoofSchedule& s) : sched(&s), rng(mix_seed(s.seed, 0)) {}

  // Magnitude of the next spoofing distance, or nullopt for authentic GPS.
  std::optional<double> next() {
    const int k = epoch_index++;
    switch (sched->kind) {
      case SpoofSchedule::Kind::kNone:
        return std::nullopt;
      case SpoofSchedule::Kind::kRipper:
        if (stage2) return sched->d * std::pow(sched->f, stage2_index++);
        return sched->d;
      case SpoofSchedule::Kind::kConstant:
        return sched->d;
      case SpoofSchedule::Kind::kExponential:
        return sched->d * std::pow(sched->f, k);
      case SpoofSchedule::Kind::kRandom:
        return rng.uniform(0.0, sched->range_max);
      case SpoofSchedule::Kind::kForced:
        if (k < static_cast<int>(sched->forced.size())) return sched->forced[k];
        return std::nullopt;
    }
    return std::nullopt;
  }
};

void finalize_outcome(AttackOutcome& outcome, const std::vector<double>& goals) {
  outcome.max_deviation = 0.0;
  for (const auto& [t, dev] : outcome.deviation_series) {
    outcome.max_deviation = std::max(outcome.max_deviation, std::abs(dev));
  }
  outcome.fitted_base = 1.0;
  std::size_t fit_begin = 0;
  if (outcome.stage2_epoch_index.has_value() &&
      *outcome.stage2_epoch_index < outcome.epoch_deviations.size()) {
    fit_begin = *outcome.stage2_epoch_index;
  }
  if (outcome.epoch_deviations.size() - fit_begin >= 3) {
    outcome.fitted_base =
        analysis::fit_exponential(std::span<const double>(outcome.epoch_deviations)
                                      .subspan(fit_begin))
            .a;
  }
  for (double goal : goals) outcome.success[goal] = success_time(outcome, goal);
}

}  // namespace

AttackOutcome run_attack(const BaselineCache& cache, double start_time,
                         const SpoofSchedule& schedule, const RunOptions& options,
                         WindowLog* window_log) {
  const trace::Trace& tr = cache.get_trace();
  const std::size_t e0 = cache.epoch_index_at(start_time);
  const auto& start_epoch = cache.epochs()[e0];

  FilterRunner runner{start_epoch.state_before, &cache.config(), start_epoch.last_imu};
  GroundTruthPose current_truth = start_epoch.truth;

  AttackOutcome outcome;
  outcome.start_time = start_time;
  outcome.end_time = start_time;

  ScheduleState sched(schedule);
  std::optional<Rng> error_rng;
  if (options.spoof_error.has_value()) error_rng.emplace(mix_seed(options.spoof_error->seed, 0));

  const double side_sign = options.side == Side::kLeft ? 1.0 : -1.0;
  const double t_end = start_time + options.max_duration;
  bool safe_stopped = false;
  bool done = false;

  for (std::size_t i = start_epoch.event_index; i < tr.events.size() && !done; ++i) {
    const auto& ev = tr.events[i];
    if (ev.timestamp > t_end + 1e-9) break;

    bool measured = false;
    if (const auto* pose = std::get_if<GroundTruthPose>(&ev.payload)) {
      current_truth = *pose;
      continue;
    } else if (const auto* imu = std::get_if<trace::ImuSample>(&ev.payload)) {
      runner.on_imu(ev.timestamp, *imu);
      if (window_log != nullptr) {
        window_log->imu_accel_mag.emplace_back(ev.timestamp, imu->accel_body.norm());
      }
    } else if (const auto* lidar = std::get_if<trace::LidarFix>(&ev.payload)) {
      runner.on_measurement(to_measurement(ev.timestamp, *lidar));
      measured = true;
      if (window_log != nullptr) {
        window_log->lidar_variance.emplace_back(ev.timestamp, mean_variance(lidar->variance));
        if (const auto* base = cache.after_event(i)) {
          window_log->lidar_offset.emplace_back(ev.timestamp,
                                                (lidar->position - base->position).norm());
        }
      }
    } else if (const auto* gps = std::get_if<trace::GpsFix>(&ev.payload)) {
      runner.advance_to(ev.timestamp);
      if (window_log != nullptr) {
        window_log->epoch_times.push_back(ev.timestamp);
        window_log->cov_trace.push_back(runner.state.covariance.trace());
      }
      std::optional<double> magnitude = sched.next();
      if (safe_stopped) magnitude.reset();

      kf::KfStepLog log;
      SpoofRecord record;
      record.timestamp = ev.timestamp;
      if (magnitude.has_value()) {
        kf::Measurement meas;
        meas.source = kf::Source::kGpsSpoofed;
        meas.timestamp = ev.timestamp;
        meas.position =
            current_truth.position + side_sign * *magnitude * left_normal(current_truth.heading);
        meas.uncertainty = options.spoof_variance.asDiagonal();
        if (options.spoof_error.has_value()) {
          meas = apply_spoof_error(meas, *options.spoof_error, *error_rng);
        }
        log = runner.on_measurement(meas);
        record.delta = *magnitude;
        record.spoofed = true;
      } else {
        log = runner.on_measurement(to_measurement(ev.timestamp, *gps));
      }
      record.chi2 = log.chi2;
      record.accepted = log.accepted;
      outcome.spoof_log.push_back(record);
      measured = true;
    }

    if (!measured) continue;
    const auto* base = cache.after_event(i);
    if (base == nullptr) continue;
    const double dev = signed_lateral(runner.state.position, base->position, base->heading);
    outcome.deviation_series.emplace_back(ev.timestamp, dev);
    outcome.end_time = ev.timestamp;
    if (std::holds_alternative<trace::GpsFix>(ev.payload)) {
      outcome.epoch_deviations.push_back(std::abs(dev));
    }
    const double abs_dev = std::abs(dev);
    if (schedule.kind == SpoofSchedule::Kind::kRipper && !sched.stage2 &&
        abs_dev > schedule.trigger_threshold) {
      sched.stage2 = true;
      sched.stage2_index = 0;
      outcome.stage2_time = ev.timestamp;
      outcome.stage2_epoch_index = outcome.epoch_deviations.size();
    }
    if (abs_dev >= options.safe_stop_threshold) safe_stopped = true;
    if (abs_dev >= options.stop_abs_dev) done = true;
  }

  finalize_outcome(outcome, options.goals.empty() ? default_goals() : options.goals);
  return outcome;
}

namespace {

RunOptions options_from_config(const AttackConfig& cfg) {
  RunOptions opt;
  opt.side = cfg.side;
  opt.spoof_variance = cfg.spoof_uncertainty;
  opt.max_duration = cfg.max_duration;
  return opt;
}

SpoofSchedule ripper_schedule(const AttackConfig& cfg) {
  SpoofSchedule s;
  s.kind = SpoofSchedule::Kind::kRipper;
  s.d = cfg.d;
  s.f = cfg.f;
  s.trigger_threshold = cfg.trigger_threshold;
  return s;
}

void validate_attack_config(const AttackConfig& cfg) {
  if (!(cfg.d > 0.0)) throw ArgumentError("attack: d must be > 0");
  if (!(cfg.f >= 1.0)) throw ArgumentError("attack: f must be >= 1");
  if (!(cfg.trigger_threshold > 0.0)) throw ArgumentError("attack: trigger threshold must be > 0");
}

}  // namespace

AttackOutcome fusion_ripper(const trace::Trace& t, double start_time, const AttackConfig& cfg,
                            const kf::KfConfig& kf_config) {
  BaselineCache cache(t, kf_config);
  return fusion_ripper(cache, start_time, cfg);
}

AttackOutcome fusion_ripper(const BaselineCache& cache, double start_time, const AttackConfig& cfg,
                            const std::optional<SpoofErrorModel>& error,
                            const RunOptions* base_options) {
  validate_attack_config(cfg);
  RunOptions opt = base_options != nullptr ? *base_options : RunOptions{};
  opt.side = cfg.side;
  opt.spoof_variance = cfg.spoof_uncertainty;
  opt.max_duration = cfg.max_duration;
  opt.spoof_error = error;
  return run_attack(cache, start_time, ripper_schedule(cfg), opt);
}

AttackOutcome random_attack(const trace::Trace& t, double start_time, double range_max,
                            std::uint64_t seed, const kf::KfConfig& kf_config) {
  BaselineCache cache(t, kf_config);
  return random_attack(cache, start_time, range_max, seed);
}

AttackOutcome random_attack(const BaselineCache& cache, double start_time, double range_max,
                            std::uint64_t seed, const RunOptions* base_options) {
  if (!(range_max >= 0.0)) throw ArgumentError("random_attack: range_max must be >= 0");
  SpoofSchedule sched;
  sched.kind = SpoofSchedule::Kind::kRandom;
  sched.range_max = range_max;
  sched.seed = seed;
  RunOptions opt = base_options != nullptr ? *base_options : RunOptions{};
  if (base_options == nullptr) {
    opt.spoof_variance = trace::median_gps_uncertainty(cache.get_trace());
  }
  return run_attack(cache, start_time, sched, opt);
}

namespace {

struct EpochStep {
  double end_dev = 0.0;  // signed deviation at end of epoch vs the baseline
  double gps_chi2 = 0.0;
  bool gps_accepted = true;
};

// Apply one spoofed GPS epoch plus the events up to (excluding) the next
// epoch, measuring the deviation against the baseline's pre-update state at
// the next epoch.
EpochStep process_epoch(FilterRunner& runner, const BaselineCache& cache, std::size_t epoch_idx,
                        double delta_signed, const Vec2& spoof_variance, WindowLog* window_log) {
  const auto& tr = cache.get_trace();
  const auto& ep = cache.epochs()[epoch_idx];
  const auto& next = cache.epochs()[epoch_idx + 1];

  runner.advance_to(ep.time);
  if (window_log != nullptr) {
    window_log->epoch_times.push_back(ep.time);
    window_log->cov_trace.push_back(runner.state.covariance.trace());
  }

  kf::Measurement meas;
  meas.source = kf::Source::kGpsSpoofed;
  meas.timestamp = ep.time;
  meas.position = ep.truth.position + delta_signed * left_normal(ep.truth.heading);
  meas.uncertainty = spoof_variance.asDiagonal();
  const kf::KfStepLog log = runner.on_measurement(meas);

  for (std::size_t i = ep.event_index + 1; i < next.event_index; ++i) {
    const auto& ev = tr.events[i];
    if (const auto* imu = std::get_if<trace::ImuSample>(&ev.payload)) {
      runner.on_imu(ev.timestamp, *imu);
      if (window_log != nullptr) {
        window_log->imu_accel_mag.emplace_back(ev.timestamp, imu->accel_body.norm());
      }
    } else if (const auto* lidar = std::get_if<trace::LidarFix>(&ev.payload)) {
      runner.on_measurement(to_measurement(ev.timestamp, *lidar));
      if (window_log != nullptr) {
        window_log->lidar_variance.emplace_back(ev.timestamp, mean_variance(lidar->variance));
        if (const auto* base = cache.after_event(i)) {
          window_log->lidar_offset.emplace_back(ev.timestamp,
                                                (lidar->position - base->position).norm());
        }
      }
    }
  }
  runner.advance_to(next.time);

  EpochStep step;
  step.end_dev = signed_lateral(runner.state.position, next.state_before.position,
                                next.state_before.heading);
  step.gps_chi2 = log.chi2;
  step.gps_accepted = log.accepted;
  return step;
}

}  // namespace

WindowSearchResult exhaustive_window_search(const trace::Trace& t, double window_start,
                                            int n_points, const kf::KfConfig& kf_config) {
  BaselineCache cache(t, kf_config);
  WindowSearchOptions options;
  options.n_points = n_points;
  return exhaustive_window_search(cache, window_start, options);
}

WindowSearchResult exhaustive_window_search(const BaselineCache& cache, double window_start,
                                            const WindowSearchOptions& options) {
  if (options.n_points < 1) throw ArgumentError("exhaustive_window_search: n_points must be >= 1");
  const auto& epochs = cache.epochs();
  std::size_t e0 = epochs.size();
  for (std::size_t i = 0; i + 1 < epochs.size(); ++i) {
    if (epochs[i].time >= window_start - 1e-9) {
      e0 = i;
      break;
    }
  }
  if (e0 == epochs.size() ||
      e0 + static_cast<std::size_t>(options.n_points) > cache.epoch_count()) {
    throw ArgumentError("exhaustive_window_search: window exceeds trace");
  }
  if (options.forced_deltas.has_value() &&
      options.forced_deltas->size() != static_cast<std::size_t>(options.n_points)) {
    throw ArgumentError("exhaustive_window_search: forced delta count != n_points");
  }

  const Vec2 spoof_variance =
      options.spoof_variance.value_or(trace::median_gps_uncertainty(cache.get_trace()));
  const int n_steps = static_cast<int>(std::round(options.delta_max / options.delta_step));

  WindowSearchResult result;
  result.outcome.start_time = epochs[e0].time;

  FilterRunner runner{epochs[e0].state_before, &cache.config(), epochs[e0].last_imu};
  for (int k = 0; k < options.n_points; ++k) {
    const std::size_t epoch_idx = e0 + static_cast<std::size_t>(k);
    double committed_delta = 0.0;
    if (options.forced_deltas.has_value()) {
      committed_delta = (*options.forced_deltas)[k];
    } else {
      double best_score = -1.0;
      for (int m = -n_steps; m <= n_steps; ++m) {
        const double delta = options.delta_step * m;
        FilterRunner candidate = runner;
        const EpochStep step =
            process_epoch(candidate, cache, epoch_idx, delta, spoof_variance, nullptr);
        if (std::abs(step.end_dev) > best_score) {
          best_score = std::abs(step.end_dev);
          committed_delta = delta;
        }
      }
    }
    const EpochStep committed =
        process_epoch(runner, cache, epoch_idx, committed_delta, spoof_variance, &result.log);
    result.deviations.push_back(std::abs(committed.end_dev));
    result.deltas.push_back(committed_delta);
    result.outcome.deviation_series.emplace_back(epochs[epoch_idx + 1].time, committed.end_dev);
    result.outcome.epoch_deviations.push_back(std::abs(committed.end_dev));
    SpoofRecord record;
    record.timestamp = epochs[epoch_idx].time;
    record.delta = std::abs(committed_delta);
    record.spoofed = true;
    record.chi2 = committed.gps_chi2;
    record.accepted = committed.gps_accepted;
    result.outcome.spoof_log.push_back(record);
    result.outcome.end_time = epochs[epoch_idx + 1].time;
  }

  finalize_outcome(result.outcome, default_goals());
  return result;
}

std::pair<AttackOutcome, std::vector<std::pair<double, double>>> closed_loop_attack(
    const trace::Trace& t, double start_time, const AttackConfig& cfg,
    const vehicle::ControllerConfig& ctrl, const kf::KfConfig& kf_config,
    const SpoofSchedule* schedule_override) {
  BaselineCache cache(t, kf_config);
  return closed_loop_attack(cache, start_time, cfg, ctrl, schedule_override);
}

std::pair<AttackOutcome, std::vector<std::pair<double, double>>> closed_loop_attack(
    const BaselineCache& cache, double start_time, const AttackConfig& cfg,
    const vehicle::ControllerConfig& ctrl, const SpoofSchedule* schedule_override) {
  validate_attack_config(cfg);
  const trace::Trace& t = cache.get_trace();
  const kf::KfConfig& kf_config = cache.config();
  const std::size_t e0 = cache.epoch_index_at(start_time);
  const auto& start_epoch = cache.epochs()[e0];

  FilterRunner attacked{start_epoch.state_before, &kf_config, start_epoch.last_imu};
  FilterRunner reference = attacked;

  const SpoofSchedule schedule =
      schedule_override != nullptr ? *schedule_override : ripper_schedule(cfg);
  ScheduleState sched(schedule);

  AttackOutcome outcome;
  outcome.start_time = start_time;
  outcome.end_time = start_time;
  std::vector<std::pair<double, double>> physical_series;

  // Physical-world offset from the nominal (trace) trajectory, integrated from
  // the controller's steering output.
  Vec2 offset = Vec2::Zero();
  double heading_offset = 0.0;
  double extra_yaw_rate = 0.0;
  GroundTruthPose nominal_truth = start_epoch.truth;
  GroundTruthPose physical_truth = nominal_truth;

  const double side_sign = cfg.side == Side::kLeft ? 1.0 : -1.0;
  const double t_end = start_time + cfg.max_duration;
  double next_cycle = start_time;

  auto run_cycle = [&](double tc) {
    // Lane center at the cycle time, extrapolated from the latest truth.
    GroundTruthPose lane = nominal_truth;
    lane.position += lane.velocity * (tc - lane.timestamp);
    const double dev_ctrl =
        signed_lateral(attacked.state.position, lane.position, lane.heading);
    const double heading_err = normalize_angle(attacked.state.heading - lane.heading);
    const double steering = vehicle::lateral_controller(dev_ctrl, heading_err, ctrl);
    const double speed = lane.velocity.norm();
    const auto [lat_delta, heading_rate_delta] = vehicle::steering_to_pose_delta(speed, ctrl, steering);
    const double physical_heading = lane.heading + heading_offset;
    offset += lat_delta * left_normal(physical_heading) +
              speed * ctrl.cycle_time * (heading_dir(physical_heading) - heading_dir(lane.heading));
    heading_offset += heading_rate_delta * ctrl.cycle_time;
    extra_yaw_rate = heading_rate_delta;
    physical_series.emplace_back(tc, left_normal(lane.heading).dot(offset));
  };

  for (std::size_t i = start_epoch.event_index; i < t.events.size(); ++i) {
    const auto& ev = t.events[i];
    if (ev.timestamp > t_end + 1e-9) break;
    while (next_cycle <= ev.timestamp + 1e-12) {
      run_cycle(next_cycle);
      next_cycle += ctrl.cycle_time;
    }

    bool measured = false;
    if (const auto* pose = std::get_if<GroundTruthPose>(&ev.payload)) {
      nominal_truth = *pose;
      physical_truth = *pose;
      physical_truth.position += offset;
      physical_truth.heading = normalize_angle(physical_truth.heading + heading_offset);
      continue;
    } else if (const auto* imu = std::get_if<trace::ImuSample>(&ev.payload)) {
      trace::ImuSample adjusted = *imu;
      adjusted.yaw_rate += extra_yaw_rate;
      // Steering rotates the velocity vector; the accelerometer sees that as
      // centripetal acceleration (body-lateral, magnitude v * omega).
      adjusted.accel_body.y() += nominal_truth.velocity.norm() * extra_yaw_rate;
      attacked.on_imu(ev.timestamp, adjusted);
      reference.on_imu(ev.timestamp, adjusted);
    } else if (const auto* lidar = std::get_if<trace::LidarFix>(&ev.payload)) {
      kf::Measurement meas = to_measurement(ev.timestamp, *lidar);
      meas.position += offset;
      attacked.on_measurement(meas);
      reference.on_measurement(meas);
      measured = true;
    } else if (const auto* gps = std::get_if<trace::GpsFix>(&ev.payload)) {
      kf::Measurement authentic = to_measurement(ev.timestamp, *gps);
      authentic.position += offset;
      std::optional<double> magnitude = sched.next();
      kf::KfStepLog log;
      SpoofRecord record;
      record.timestamp = ev.timestamp;
      if (magnitude.has_value()) {
        kf::Measurement meas;
        meas.source = kf::Source::kGpsSpoofed;
        meas.timestamp = ev.timestamp;
        meas.position = physical_truth.position +
                        side_sign * *magnitude * left_normal(physical_truth.heading);
        meas.uncertainty = cfg.spoof_uncertainty.asDiagonal();
        log = attacked.on_measurement(meas);
        record.delta = *magnitude;
        record.spoofed = true;
      } else {
        log = attacked.on_measurement(authentic);
      }
      reference.on_measurement(authentic);
      record.chi2 = log.chi2;
      record.accepted = log.accepted;
      outcome.spoof_log.push_back(record);
      measured = true;
    }

    if (!measured) continue;
    const double dev = signed_lateral(attacked.state.position, reference.state.position,
                                      reference.state.heading);
    outcome.deviation_series.emplace_back(ev.timestamp, dev);
    outcome.end_time = ev.timestamp;
    if (std::holds_alternative<trace::GpsFix>(ev.payload)) {
      outcome.epoch_deviations.push_back(std::abs(dev));
    }
    if (schedule.kind == SpoofSchedule::Kind::kRipper && !sched.stage2 &&
        std::abs(dev) > schedule.trigger_threshold) {
      sched.stage2 = true;
      sched.stage2_index = 0;
      outcome.stage2_time = ev.timestamp;
      outcome.stage2_epoch_index = outcome.epoch_deviations.size();
    }
  }

  finalize_outcome(outcome, default_goals());
  return {outcome, physical_series};
}

}  // namespace msfsim::attack
