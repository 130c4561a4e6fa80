#pragma once

#include "msfsim/types.hpp"

namespace msfsim {

// Noise-free vehicle pose in the map frame.
struct GroundTruthPose {
  Vec2 position{0.0, 0.0};   // m
  Vec2 velocity{0.0, 0.0};   // m/s
  double heading = 0.0;      // rad, (-pi, pi]
  double timestamp = 0.0;    // s
};

}  // namespace msfsim
