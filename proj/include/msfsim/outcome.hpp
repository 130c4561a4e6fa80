#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "msfsim/types.hpp"

namespace msfsim::attack {

enum class Side { kLeft, kRight };

inline const char* side_name(Side s) { return s == Side::kLeft ? "left" : "right"; }

// One spoofed GPS epoch: what was injected and how the filter gated it.
struct SpoofRecord {
  double timestamp = 0.0;
  double delta = 0.0;  // spoofing distance actually injected, m (0 = authentic)
  bool spoofed = false;
  double chi2 = 0.0;
  bool accepted = true;
};

// Per-run record of an attack against the fusion filter. Deviations are the
// signed lateral offset of the attacked filter's output from the non-attacked
// one (positive to the left of travel); success times are relative to the
// attack start.
struct AttackOutcome {
  double start_time = 0.0;
  double end_time = 0.0;
  std::optional<double> stage2_time;           // absolute, s
  std::vector<std::pair<double, double>> deviation_series;  // (timestamp, signed dev)
  double max_deviation = 0.0;                  // max |dev| over the series
  std::map<double, std::optional<double>> success;  // goal (m) -> time since start
  // Exponential base of the per-epoch deviations; fitted from the stage-2
  // switch onward when one happened, since that is the segment the schedule
  // tries to grow exponentially.
  double fitted_base = 1.0;

  // Per-GPS-epoch |deviation| right after each (spoofed or authentic) GPS
  // update from the attack start; input of the exponential fit.
  std::vector<double> epoch_deviations;
  std::optional<std::size_t> stage2_epoch_index;  // index into epoch_deviations
  std::vector<SpoofRecord> spoof_log;
};

// First time (since attack start) the absolute deviation reaches `goal`,
// scanning the recorded series.
std::optional<double> success_time(const AttackOutcome& outcome, double goal);

// Covariance/measurement context of an attack window, used for contributing-
// factor extraction. The per-epoch entries align with epoch_deviations.
struct WindowLog {
  std::vector<double> epoch_times;
  std::vector<double> cov_trace;                        // trace(P) at each GPS epoch
  std::vector<std::pair<double, double>> lidar_variance;  // (t, mean reported variance)
  std::vector<std::pair<double, double>> lidar_offset;    // (t, |lidar pos - reference pos|)
  std::vector<std::pair<double, double>> imu_accel_mag;   // (t, |accel|)
};

}  // namespace msfsim::attack
