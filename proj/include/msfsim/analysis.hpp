#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "msfsim/outcome.hpp"
#include "msfsim/pose.hpp"
#include "msfsim/types.hpp"

namespace msfsim::analysis {

enum class RoadType { kLocal, kHighway };

struct RoadGeometry {
  double lane_width = 2.70;      // L, m
  double car_width = 2.11;       // C, m
  double shoulder_width = 0.60;  // S, m
  RoadType road_type = RoadType::kLocal;
};

RoadGeometry local_road();
RoadGeometry highway_road();

struct GoalThresholds {
  double off_road = 0.0;        // (L - C)/2 + S
  double wrong_way = 0.0;       // (L + C)/2
  double touch_lane_line = 0.0; // (L - C)/2
};

GoalThresholds goal_thresholds(const RoadGeometry& geom);

// Signed perpendicular distance from a position to a piecewise-linear
// trajectory, positive to the left of the direction of travel.
double lateral_deviation(const Vec2& pos, std::span<const GroundTruthPose> trajectory);

struct ExponentialFit {
  double a = 1.0;
  double b = 0.0;
  double mse = 0.0;
};

// Least-squares fit of f(x) = a^x + b over x = 1..n: 1-D grid on
// a in [1, 3] (step 0.001) with the offset b closed-form per candidate.
ExponentialFit fit_exponential(std::span<const double> devs);

// Exponential base above which a window is labeled as taken over.
inline constexpr double kTakeoverBaseThreshold = 1.1;

struct ClosedFormDeviations {
  Vec5 dev1 = Vec5::Zero();
  Vec5 dev_imu = Vec5::Zero();
  Vec5 dev_lidar = Vec5::Zero();
  Vec5 dev2 = Vec5::Zero();
};

// Closed-form deviations of the reduced two-spoof pipeline
// (spoofed GPS update, IMU prediction, LiDAR update, spoofed GPS update),
// with gains propagated through the covariance chain:
//   dev1      = K1 * delta1
//   dev_imu   = F1 * dev1
//   dev_lidar = dev_imu - K_lidar * (delta_lidar + H * dev_imu)
//   dev2      = dev_lidar + K2 * (delta2 - H * dev_lidar)
ClosedFormDeviations closed_form_dev2(const Mat5& p0, const Mat2& r1, const Mat2& r1_lidar,
                                      const Mat2& r2, const Vec2& delta1, const Vec2& delta2,
                                      const Vec2& delta_lidar, const Mat5& f1, const Mat2x5& h);

// Contributing-factor tuple of one attack window.
struct FactorSample {
  double p0 = 0.0;           // trace(P) at the exponential-growth onset
  double r_lidar = 0.0;      // mean reported LiDAR variance over the tail
  double delta_lidar = 0.0;  // mean |lidar pos - reference pos| over the tail
  double imu = 0.0;          // mean |accel| over the tail
  bool takeover = false;
};

FactorSample extract_factors(const attack::WindowLog& window_log,
                             const attack::AttackOutcome& outcome);

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
};

// Sample correlation with a two-sided Student-t p-value.
PearsonResult pearson(std::span<const double> xs, std::span<const double> ys);

struct FisherResult {
  double odds_ratio = 1.0;
  double p = 1.0;
};

// Two-sided Fisher's exact test on a 2x2 table [[n11, n12], [n21, n22]].
FisherResult fisher_exact(const std::array<std::array<long long, 2>, 2>& table);

// Regularized incomplete beta I_x(a, b); exposed for the statistics tests.
double incomplete_beta(double a, double b, double x);

struct SuccessCell {
  double d = 0.0;
  double f = 0.0;
  double success_rate = 0.0;
  double mean_success_time = 0.0;  // over successful starts, s since attack start
  double std_success_time = 0.0;
  int n_success = 0;
  int n_starts = 0;
};

struct SuccessReport {
  double goal = 0.0;
  double min_duration = 0.0;
  std::vector<SuccessCell> cells;  // ordered by (d, f)
  SuccessCell best;
  std::vector<SuccessCell> top3;
};

// One attack run within a parameter sweep.
struct AttackRunRecord {
  double d = 0.0;
  double f = 0.0;
  attack::Side side = attack::Side::kLeft;
  double start_time = 0.0;
  attack::AttackOutcome outcome;
};

// Success rates over starting points: a start succeeds for (d, f) if either
// side reaches the goal deviation within the minimum attack duration.
SuccessReport success_metrics(std::span<const AttackRunRecord> records, double goal,
                              double min_duration);

std::string success_report_to_json(const SuccessReport& report);
// CSV matrix, rows d, columns f.
std::string success_report_to_csv(const SuccessReport& report);

}  // namespace msfsim::analysis
