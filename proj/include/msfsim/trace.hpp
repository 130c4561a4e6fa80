#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "msfsim/pose.hpp"
#include "msfsim/types.hpp"

namespace msfsim::trace {

// Sensor rates used for synthesis, matching a production AD sensor set.
inline constexpr double kImuRateHz = 200.0;
inline constexpr double kTruthRateHz = 100.0;
inline constexpr double kLidarRateHz = 5.0;
inline constexpr double kGpsRateHz = 1.0;

struct ImuSample {
  Vec2 accel_body{0.0, 0.0};  // m/s^2, body frame
  double yaw_rate = 0.0;      // rad/s
};

struct GpsFix {
  Vec2 position{0.0, 0.0};
  Vec2 variance{1.0, 1.0};  // diagonal of the reported 2x2 uncertainty, m^2
};

struct LidarFix {
  Vec2 position{0.0, 0.0};
  Vec2 variance{1.0, 1.0};
};

using Payload = std::variant<ImuSample, GpsFix, LidarFix, GroundTruthPose>;

struct TraceEvent {
  double timestamp = 0.0;
  Payload payload;
};

// Processing order for events sharing a timestamp: pose bookkeeping first,
// then prediction input, then measurements.
int kind_rank(const Payload& p);
const char* kind_name(const Payload& p);

struct Trace {
  std::vector<TraceEvent> events;

  bool empty() const { return events.empty(); }
  double begin_time() const;
  double end_time() const;
};

struct SyntheticScenario {
  double speed_mps = 20.1168;  // 45 mph
  double heading = 0.0;
  Vec2 start{0.0, 0.0};
};

// GPS is the coarse source here and the LiDAR locator the precise one; the
// reported GPS variance is large enough that variance-noise on spoofed fixes
// (sigma 0.008 m^2) stays a perturbation.
struct NoiseModel {
  double gps_pos_sigma = 0.12;      // m
  double lidar_pos_sigma = 0.02;    // m
  double imu_accel_sigma = 0.05;    // m/s^2
  double imu_gyro_sigma = 0.002;    // rad/s
  double gps_var_nominal = 0.02;    // m^2, reported GPS uncertainty
  double lidar_var_nominal = 4e-3;  // m^2, reported LiDAR-locator uncertainty
  std::uint64_t seed = 0;
};

// Interval during which the LiDAR locator is degraded: reported variance
// scaled up and positions shifted by a constant per-period bias.
struct UnconfidentPeriod {
  double start = 0.0;          // s
  double end = 0.0;            // s, > start
  double lidar_var_scale = 1.0;
  double lidar_bias_sigma = 0.0;  // m
};

// Straight-road constant-velocity trace: IMU 200 Hz, truth 100 Hz, LiDAR 5 Hz,
// GPS 1 Hz; sensors read truth plus independent zero-mean Gaussian noise.
Trace generate_synthetic_trace(double duration, const SyntheticScenario& scenario,
                               const NoiseModel& noise);

Trace inject_unconfident_periods(const Trace& t, const std::vector<UnconfidentPeriod>& periods,
                                 std::uint64_t seed);

// JSONL, one event per line; gzip-compressed when the path ends in ".gz".
void write_trace(const Trace& t, const std::string& path);
Trace read_trace(const std::string& path);

// Per-axis median of the reported GPS variances; the uncertainty claimed by
// spoofed inputs.
Vec2 median_gps_uncertainty(const Trace& t);

// Copy with all LiDAR events removed (single-source study).
Trace without_lidar(const Trace& t);

// Truth pose at an arbitrary time, linearly interpolated between the in-band
// 100 Hz truth samples (clamped at the ends).
GroundTruthPose interpolate_truth(const Trace& t, double time);

// Sorted, per-kind strictly increasing timestamps.
void validate_trace(const Trace& t);

}  // namespace msfsim::trace
