#include "msfsim/kf.hpp"

#include <cmath>

#include "msfsim/errors.hpp"

namespace msfsim::kf {

namespace {

void require_finite_state(const MsfState& state) {
  if (!state.state_vector().allFinite() || !state.covariance.allFinite()) {
    throw NumericError("kf: non-finite state");
  }
}

Mat5 symmetrized(const Mat5& p) { return 0.5 * (p + p.transpose()); }

// S must be safely invertible before we form K or chi2.
Mat2 invert_innovation_cov(const Mat2& s) {
  const double det = s.determinant();
  const double scale = s.cwiseAbs().maxCoeff();
  if (!std::isfinite(det) || std::abs(det) <= 1e-15 * std::max(scale * scale, 1e-300)) {
    throw LinAlgError("kf: singular innovation covariance");
  }
  return s.inverse();
}

}  // namespace

Mat5 transition_jacobian(const MsfState& state, const vehicle::TransitionModel& transition) {
  const double dt = transition.dt;
  const double heading_next = state.heading + transition.yaw_rate * dt;
  // d/dheading of the rotation applied to the body acceleration.
  const double c = std::cos(heading_next), s = std::sin(heading_next);
  Mat2 rot_deriv;
  rot_deriv << -s, -c, c, -s;
  const Vec2 g = rot_deriv * transition.accel_body * dt;

  Mat5 f = Mat5::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  f(0, 4) = g.x() * dt;
  f(1, 4) = g.y() * dt;
  f(2, 4) = g.x();
  f(3, 4) = g.y();
  return f;
}

MsfState predict(const MsfState& state, const vehicle::TransitionModel& transition,
                 const KfConfig& config) {
  if (!(transition.dt > 0.0)) throw ArgumentError("predict: dt must be > 0");
  if (!transition.accel_body.allFinite() || !std::isfinite(transition.yaw_rate)) {
    throw NumericError("predict: non-finite transition");
  }
  require_finite_state(state);

  GroundTruthPose pose;
  pose.position = state.position;
  pose.velocity = state.velocity;
  pose.heading = state.heading;
  pose.timestamp = state.timestamp;
  const GroundTruthPose next = vehicle::integrate_pose(pose, transition);

  const Mat5 f = transition_jacobian(state, transition);

  MsfState out = state;
  out.position = next.position;
  out.velocity = next.velocity;
  out.heading = next.heading;
  out.timestamp = next.timestamp;
  out.covariance =
      symmetrized(f * state.covariance * f.transpose() + config.process_noise * transition.dt);
  return out;
}

MsfState linear_predict(const MsfState& state, const Mat5& f, const Mat5& q) {
  require_finite_state(state);
  MsfState out = state;
  out.set_state_vector(f * state.state_vector());
  out.covariance = symmetrized(f * state.covariance * f.transpose() + q);
  return out;
}

std::pair<MsfState, KfStepLog> update(const MsfState& state, const Measurement& meas,
                                      const KfConfig& config) {
  require_finite_state(state);
  if (!meas.position.allFinite() || !meas.uncertainty.allFinite()) {
    throw NumericError("update: non-finite measurement");
  }
  const Mat2x5& h = config.observation_model;
  const Mat2 s = h * state.covariance * h.transpose() + meas.uncertainty;
  const Mat2 s_inv = invert_innovation_cov(s);
  const Vec2 innovation = meas.position - h * state.state_vector();
  const Mat5x2 k = state.covariance * h.transpose() * s_inv;

  MsfState out = state;
  out.set_state_vector(state.state_vector() + k * innovation);
  out.covariance = symmetrized(state.covariance - k * h * state.covariance);
  out.timestamp = state.timestamp;

  KfStepLog log;
  log.kalman_gain = k;
  log.innovation = innovation;
  log.innovation_covariance = s;
  log.chi2 = innovation.dot(s_inv * innovation);
  log.accepted = true;
  return {out, log};
}

double chi_squared(const MsfState& state, const Measurement& meas, const KfConfig& config) {
  require_finite_state(state);
  const Mat2x5& h = config.observation_model;
  const Mat2 s = h * state.covariance * h.transpose() + meas.uncertainty;
  const Vec2 innovation = meas.position - h * state.state_vector();
  return innovation.dot(invert_innovation_cov(s) * innovation);
}

std::pair<MsfState, KfStepLog> process_measurement(const MsfState& state, const Measurement& meas,
                                                   const KfConfig& config) {
  auto [updated, log] = update(state, meas, config);
  if (log.chi2 <= config.chi2_threshold) {
    return {updated, log};
  }
  log.accepted = false;
  if (config.outlier_policy == OutlierPolicy::kDiscard) {
    return {state, log};
  }
  // Partial update: scale both the state correction and the covariance
  // contraction by the configured weight.
  const double w = config.partial_weight;
  const Mat2x5& h = config.observation_model;
  MsfState out = state;
  out.set_state_vector(state.state_vector() + w * (log.kalman_gain * log.innovation));
  out.covariance = symmetrized(state.covariance - w * (log.kalman_gain * h * state.covariance));
  return {out, log};
}

}  // namespace msfsim::kf
