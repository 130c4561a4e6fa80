#include "msfsim/vehicle.hpp"

#include <algorithm>
#include <cmath>

#include "msfsim/errors.hpp"

namespace msfsim::vehicle {

std::pair<double, double> steering_to_pose_delta(double v, const ControllerConfig& cfg,
                                                 double theta) {
  if (!(v >= 0.0) || !std::isfinite(theta)) {
    throw ArgumentError("steering_to_pose_delta: v must be >= 0 and theta finite");
  }
  const double wheel = theta / cfg.steering_ratio;
  const double lateral_delta = v * cfg.cycle_time * std::sin(wheel);
  const double heading_rate_delta = wheel / cfg.cycle_time;
  return {lateral_delta, heading_rate_delta};
}

double lateral_controller(double lateral_dev, double heading_err, const ControllerConfig& cfg) {
  if (!std::isfinite(lateral_dev) || !std::isfinite(heading_err)) {
    throw NumericError("lateral_controller: non-finite input");
  }
  const double raw = -cfg.gain_lateral * lateral_dev - cfg.gain_heading * heading_err;
  return std::clamp(raw, -cfg.max_steering, cfg.max_steering);
}

GroundTruthPose integrate_pose(const GroundTruthPose& pose, const TransitionModel& tm) {
  if (!(tm.dt > 0.0)) throw ArgumentError("integrate_pose: dt must be > 0");
  GroundTruthPose out = pose;
  out.heading = normalize_angle(pose.heading + tm.yaw_rate * tm.dt);
  out.velocity = pose.velocity + rotation(out.heading) * tm.accel_body * tm.dt;
  out.position = pose.position + out.velocity * tm.dt;
  out.timestamp = pose.timestamp + tm.dt;
  return out;
}

}  // namespace msfsim::vehicle
