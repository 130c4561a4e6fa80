#pragma once

#include <utility>

#include "msfsim/types.hpp"
#include "msfsim/vehicle.hpp"

namespace msfsim::kf {

// Fused vehicle estimate: planar position/velocity/heading plus the 5x5 state
// covariance over [px, py, vx, vy, heading].
struct MsfState {
  Vec2 position{0.0, 0.0};
  Vec2 velocity{0.0, 0.0};
  double heading = 0.0;
  Mat5 covariance = Mat5::Zero();
  double timestamp = 0.0;

  Vec5 state_vector() const {
    Vec5 v;
    v << position.x(), position.y(), velocity.x(), velocity.y(), heading;
    return v;
  }
  void set_state_vector(const Vec5& v) {
    position = {v(0), v(1)};
    velocity = {v(2), v(3)};
    heading = normalize_angle(v(4));
  }
};

enum class Source { kGps, kLidar, kGpsSpoofed };

// A position observation with its reported uncertainty (covariance, m^2).
// Sensor feeds populate a diagonal matrix.
struct Measurement {
  Source source = Source::kGps;
  Vec2 position{0.0, 0.0};
  Mat2 uncertainty = Mat2::Identity();
  double timestamp = 0.0;
};

enum class OutlierPolicy { kDiscard, kPartial };

struct KfConfig {
  // Process noise rate Q (per second of propagation).
  Mat5 process_noise = (Vec5() << 1e-4, 1e-4, 5e-2, 5e-2, 1e-6).finished().asDiagonal();
  // Observation model H; position measurements by default.
  Mat2x5 observation_model = (Mat2x5() << 1, 0, 0, 0, 0, 0, 1, 0, 0, 0).finished();
  double chi2_threshold = 3.841;
  OutlierPolicy outlier_policy = OutlierPolicy::kDiscard;
  double partial_weight = 0.5;  // innovation weight for kPartial, in (0,1)
  // Diagonal of the covariance a freshly initialized filter starts from.
  Vec5 init_variance = (Vec5() << 2.5e-3, 2.5e-3, 1e-2, 1e-2, 1e-4).finished();
};

// Gain, innovation, and gating diagnostics of one measurement step.
struct KfStepLog {
  Mat5x2 kalman_gain = Mat5x2::Zero();
  Vec2 innovation{0.0, 0.0};
  Mat2 innovation_covariance = Mat2::Zero();
  double chi2 = 0.0;
  bool accepted = true;
};

// IMU-driven prediction: kinematic propagation of the mean (same map as
// vehicle::integrate_pose) with covariance F P F^T + Q*dt, where F is the
// Jacobian of the map at the prior state.
MsfState predict(const MsfState& state, const vehicle::TransitionModel& transition,
                 const KfConfig& config);

// Raw linear prediction x <- F x, P <- F P F^T + Q. Building block for
// reduced-pipeline checks where F is given directly.
MsfState linear_predict(const MsfState& state, const Mat5& f, const Mat5& q);

// Jacobian of the kinematic map used by predict(), at the given state.
Mat5 transition_jacobian(const MsfState& state, const vehicle::TransitionModel& transition);

// Unconditional measurement update.
std::pair<MsfState, KfStepLog> update(const MsfState& state, const Measurement& meas,
                                      const KfConfig& config);

// Normalized innovation squared (z - Hx)^T S^-1 (z - Hx).
double chi_squared(const MsfState& state, const Measurement& meas, const KfConfig& config);

// Gated update: full update when chi2 passes the threshold, otherwise the
// configured outlier policy (discard, or partial update with the innovation
// scaled by the configured weight).
std::pair<MsfState, KfStepLog> process_measurement(const MsfState& state, const Measurement& meas,
                                                   const KfConfig& config);

}  // namespace msfsim::kf
