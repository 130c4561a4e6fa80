#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace msfsim {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat2x5 = Eigen::Matrix<double, 2, 5>;
using Mat5x2 = Eigen::Matrix<double, 5, 2>;

// Wrap an angle into (-pi, pi].
inline double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a > M_PI) a -= 2.0 * M_PI;
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

// Unit vector along a heading.
inline Vec2 heading_dir(double heading) {
  return {std::cos(heading), std::sin(heading)};
}

// Unit normal 90 degrees to the left of a heading.
inline Vec2 left_normal(double heading) {
  return {-std::sin(heading), std::cos(heading)};
}

inline Mat2 rotation(double heading) {
  const double c = std::cos(heading), s = std::sin(heading);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

}  // namespace msfsim
