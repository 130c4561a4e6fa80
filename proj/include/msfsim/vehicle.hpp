#pragma once

#include <utility>

#include "msfsim/pose.hpp"
#include "msfsim/types.hpp"

namespace msfsim::vehicle {

// One IMU-driven propagation step: body-frame acceleration, yaw rate, duration.
struct TransitionModel {
  Vec2 accel_body{0.0, 0.0};  // m/s^2
  double yaw_rate = 0.0;      // rad/s
  double dt = 0.0;            // s, > 0
};

struct ControllerConfig {
  double gain_lateral = 0.01;   // rad of steering per m of lateral deviation
  double gain_heading = 0.3;    // rad per rad of heading error
  double steering_ratio = 16.0; // steering wheel angle : road wheel angle
  double cycle_time = 0.01;     // s (100 Hz control loop)
  double max_steering = 8.0;    // rad, steering wheel angle clamp
};

// Lateral position change and heading-rate change produced by holding a
// steering wheel angle `theta` for one controller cycle at speed `v`.
std::pair<double, double> steering_to_pose_delta(double v, const ControllerConfig& cfg,
                                                 double theta);

// Proportional lane-centering law: steer against lateral deviation and heading
// error, clamped to the steering limit.
double lateral_controller(double lateral_dev, double heading_err, const ControllerConfig& cfg);

// Discrete kinematics shared by trace synthesis and the fusion filter's
// prediction step. Updates run in sequence: heading, then velocity (body
// acceleration rotated by the new heading), then position with the new
// velocity.
GroundTruthPose integrate_pose(const GroundTruthPose& pose, const TransitionModel& tm);

}  // namespace msfsim::vehicle
