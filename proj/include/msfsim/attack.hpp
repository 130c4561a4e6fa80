#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "msfsim/kf.hpp"
#include "msfsim/outcome.hpp"
#include "msfsim/rng.hpp"
#include "msfsim/trace.hpp"
#include "msfsim/vehicle.hpp"

namespace msfsim::attack {

struct AttackConfig {
  double d = 0.5;                  // constant spoofing distance, m
  double f = 1.3;                  // exponential base of the aggressive stage
  Side side = Side::kLeft;
  double trigger_threshold = 0.295;  // lateral deviation that flips to stage 2, m
  Vec2 spoof_uncertainty{0.02, 0.02};  // diagonal variance claimed by spoofed fixes
  double max_duration = 120.0;     // s
};

// Imperfections of the spoofed fixes: position error radius ~ N(0, sigma^2)
// with uniform direction, and additive noise on the claimed variance.
struct SpoofErrorModel {
  double pos_sigma = 0.058;   // m
  double var_sigma = 0.008;   // m^2
  double multiplier = 1.0;    // 1x / 2x / 3x error scaling
  std::uint64_t seed = 0;
};

kf::Measurement apply_spoof_error(const kf::Measurement& meas, const SpoofErrorModel& model,
                                  Rng& rng);

// Spoofing-distance schedule over the GPS epochs of an attack run.
struct SpoofSchedule {
  enum class Kind {
    kNone,         // leave GPS authentic (reference runs, controller-only loops)
    kRipper,       // constant d until the trigger deviation, then d * f^i
    kConstant,     // profiling stage only: constant d
    kExponential,  // aggressive stage only: d * f^i from the first epoch
    kRandom,       // delta ~ U(0, range_max) per epoch
    kForced,       // fixed per-epoch magnitudes (tests, ablations)
  };
  Kind kind = Kind::kRipper;
  double d = 0.5;
  double f = 1.3;
  double trigger_threshold = 0.295;
  double range_max = 10.0;
  std::uint64_t seed = 0;
  std::vector<double> forced;
};

struct RunOptions {
  Side side = Side::kLeft;
  Vec2 spoof_variance{0.02, 0.02};
  double max_duration = 120.0;
  std::optional<SpoofErrorModel> spoof_error;
  // Stop the run early once |deviation| exceeds this (the crossing sample is
  // recorded first).
  double stop_abs_dev = std::numeric_limits<double>::infinity();
  // Revert to authentic GPS once |deviation| reaches this (latched); the safe
  // profiling behaviour.
  double safe_stop_threshold = std::numeric_limits<double>::infinity();
  std::vector<double> goals;  // success thresholds; defaults to the road-goal set
  bool collect_window_log = false;
};

std::vector<double> default_goals();

// Replay of all trace events through one filter; one output per measurement
// update.
std::vector<std::pair<double, kf::MsfState>> run_baseline(const trace::Trace& t,
                                                          const kf::KfConfig& config);

// Precomputed non-attacked replay of a trace: per-GPS-epoch filter snapshots
// for starting attack runs mid-trace, and per-event baseline outputs for
// deviation bookkeeping. Holds a reference to the trace.
class BaselineCache {
 public:
  struct EpochInfo {
    std::size_t event_index = 0;  // index of the GPS event in trace.events
    double time = 0.0;
    kf::MsfState state_before;    // advanced to the epoch, before the GPS update
    trace::ImuSample last_imu;
    GroundTruthPose truth;        // victim truth at the epoch
  };

  struct BaselineAt {
    Vec2 position{0.0, 0.0};
    double heading = 0.0;
    double cov_trace = 0.0;
  };

  BaselineCache(const trace::Trace& t, const kf::KfConfig& config);

  const trace::Trace& get_trace() const { return *trace_; }
  const kf::KfConfig& config() const { return config_; }
  // Epochs in the trace; one sentinel entry past the last epoch for
  // end-of-window scoring.
  const std::vector<EpochInfo>& epochs() const { return epochs_; }
  std::size_t epoch_count() const { return epochs_.size() - 1; }
  std::size_t epoch_index_at(double start_time) const;
  const BaselineAt* after_event(std::size_t event_index) const;
  double gps_period() const { return gps_period_; }
  const std::vector<std::pair<double, kf::MsfState>>& outputs() const { return outputs_; }

 private:
  const trace::Trace* trace_;
  kf::KfConfig config_;
  std::vector<EpochInfo> epochs_;
  std::vector<std::optional<BaselineAt>> after_event_;
  std::vector<std::pair<double, kf::MsfState>> outputs_;
  double gps_period_ = 1.0;
};

// Core engine: replay from a GPS epoch with the schedule applied to the
// attacked filter, deviations measured against the cached baseline.
AttackOutcome run_attack(const BaselineCache& cache, double start_time,
                         const SpoofSchedule& schedule, const RunOptions& options,
                         WindowLog* window_log = nullptr);

// Two-stage attack: constant-distance probing until the victim deviates past
// the trigger threshold, then exponential spoofing distances d * f^i.
AttackOutcome fusion_ripper(const trace::Trace& t, double start_time, const AttackConfig& cfg,
                            const kf::KfConfig& kf_config);
AttackOutcome fusion_ripper(const BaselineCache& cache, double start_time, const AttackConfig& cfg,
                            const std::optional<SpoofErrorModel>& error = std::nullopt,
                            const RunOptions* base_options = nullptr);

AttackOutcome random_attack(const trace::Trace& t, double start_time, double range_max,
                            std::uint64_t seed, const kf::KfConfig& kf_config);
AttackOutcome random_attack(const BaselineCache& cache, double start_time, double range_max,
                            std::uint64_t seed, const RunOptions* base_options = nullptr);

struct WindowSearchResult {
  std::vector<double> deviations;  // per-epoch committed |deviation| at end of epoch
  std::vector<double> deltas;      // committed spoofing distances, signed (+ = left)
  WindowLog log;
  AttackOutcome outcome;           // synthesized record over the window
};

struct WindowSearchOptions {
  int n_points = 10;
  double delta_max = 10.0;
  double delta_step = 0.04;
  // Uncertainty claimed by spoofed candidates; defaults to the trace's median
  // GPS variance.
  std::optional<Vec2> spoof_variance;
  // When set, skip the search and commit these signed deltas.
  std::optional<std::vector<double>> forced_deltas;
};

// Upper-bound oracle: per GPS epoch, greedily commit the spoofing distance
// (both sides) that maximizes the end-of-epoch deviation on a cloned filter,
// LiDAR/IMU events between epochs included.
WindowSearchResult exhaustive_window_search(const trace::Trace& t, double window_start,
                                            int n_points, const kf::KfConfig& kf_config);
WindowSearchResult exhaustive_window_search(const BaselineCache& cache, double window_start,
                                            const WindowSearchOptions& options);

// Closed-loop variant: a lateral controller corrects the attacked filter's
// deviation from the lane center every control cycle, and the resulting
// physical motion is folded back into LiDAR/IMU/truth (and authentic GPS)
// inputs. Returns the filter-level outcome and the physical-world lateral
// deviation series.
std::pair<AttackOutcome, std::vector<std::pair<double, double>>> closed_loop_attack(
    const trace::Trace& t, double start_time, const AttackConfig& cfg,
    const vehicle::ControllerConfig& ctrl, const kf::KfConfig& kf_config,
    const SpoofSchedule* schedule_override = nullptr);
std::pair<AttackOutcome, std::vector<std::pair<double, double>>> closed_loop_attack(
    const BaselineCache& cache, double start_time, const AttackConfig& cfg,
    const vehicle::ControllerConfig& ctrl, const SpoofSchedule* schedule_override = nullptr);

}  // namespace msfsim::attack
