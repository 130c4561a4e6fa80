#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "msfsim/attack.hpp"
#include "msfsim/errors.hpp"
#include "msfsim/experiment.hpp"
#include "msfsim/trace.hpp"

using namespace msfsim;
namespace fs = std::filesystem;

namespace {

trace::NoiseModel noise_free() {
  trace::NoiseModel n;
  n.gps_pos_sigma = 0.0;
  n.lidar_pos_sigma = 0.0;
  n.imu_accel_sigma = 0.0;
  n.imu_gyro_sigma = 0.0;
  return n;
}

struct Counts {
  int imu = 0, gps = 0, lidar = 0, truth = 0;
};

Counts count_events(const trace::Trace& t) {
  Counts c;
  for (const auto& ev : t.events) {
    switch (trace::kind_rank(ev.payload)) {
      case 0: ++c.truth; break;
      case 1: ++c.imu; break;
      case 2: ++c.lidar; break;
      default: ++c.gps; break;
    }
  }
  return c;
}

bool traces_equal(const trace::Trace& a, const trace::Trace& b) {
  if (a.events.size() != b.events.size()) return false;
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    const auto& ea = a.events[i];
    const auto& eb = b.events[i];
    if (ea.timestamp != eb.timestamp) return false;
    if (ea.payload.index() != eb.payload.index()) return false;
    bool same = true;
    std::visit(
        [&](const auto& va) {
          using T = std::decay_t<decltype(va)>;
          const auto& vb = std::get<T>(eb.payload);
          if constexpr (std::is_same_v<T, trace::ImuSample>) {
            same = va.accel_body == vb.accel_body && va.yaw_rate == vb.yaw_rate;
          } else if constexpr (std::is_same_v<T, trace::GpsFix> ||
                               std::is_same_v<T, trace::LidarFix>) {
            same = va.position == vb.position && va.variance == vb.variance;
          } else {
            same = va.position == vb.position && va.velocity == vb.velocity &&
                   va.heading == vb.heading;
          }
        },
        ea.payload);
    if (!same) return false;
  }
  return true;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("generate: a 10 s trace has exactly 10 GPS, 50 LiDAR, 2000 IMU events") {
  const trace::Trace t = trace::generate_synthetic_trace(10.0, {}, noise_free());
  const Counts c = count_events(t);
  CHECK(c.gps == 10);
  CHECK(c.lidar == 50);
  CHECK(c.imu == 2000);
  CHECK(c.truth == 1000);
  CHECK_NOTHROW(trace::validate_trace(t));
}

TEST_CASE("generate: noise-free fixes sit exactly on the truth trajectory") {
  trace::SyntheticScenario sc;
  sc.speed_mps = 20.1168;
  sc.heading = 0.3;
  const trace::Trace t = trace::generate_synthetic_trace(12.0, sc, noise_free());
  for (const auto& ev : t.events) {
    const GroundTruthPose truth = trace::interpolate_truth(t, ev.timestamp);
    if (const auto* gps = std::get_if<trace::GpsFix>(&ev.payload)) {
      CHECK((gps->position - truth.position).norm() < 1e-9);
    } else if (const auto* lidar = std::get_if<trace::LidarFix>(&ev.payload)) {
      CHECK((lidar->position - truth.position).norm() < 1e-9);
    }
  }
}

TEST_CASE("generate: same seed twice is bit-identical, different seed is not") {
  trace::NoiseModel n;
  n.seed = 1234;
  const trace::Trace a = trace::generate_synthetic_trace(5.0, {}, n);
  const trace::Trace b = trace::generate_synthetic_trace(5.0, {}, n);
  CHECK(traces_equal(a, b));
  n.seed = 1235;
  const trace::Trace c = trace::generate_synthetic_trace(5.0, {}, n);
  CHECK_FALSE(traces_equal(a, c));
}

TEST_CASE("inject: identity parameters return the input unchanged") {
  const trace::Trace t = trace::generate_synthetic_trace(8.0, {}, noise_free());
  const trace::Trace out = trace::inject_unconfident_periods(t, {{2.0, 4.0, 1.0, 0.0}}, 9);
  CHECK(traces_equal(t, out));
}

TEST_CASE("inject: variance scaling applies exactly inside the period") {
  trace::NoiseModel n;
  n.seed = 5;
  const trace::Trace t = trace::generate_synthetic_trace(90.0, {}, n);
  const trace::Trace out = trace::inject_unconfident_periods(t, {{60.0, 70.0, 100.0, 0.0}}, 9);
  const Counts before = count_events(t);
  const Counts after = count_events(out);
  CHECK(before.lidar == after.lidar);
  CHECK(before.gps == after.gps);
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const auto* in_fix = std::get_if<trace::LidarFix>(&t.events[i].payload);
    const auto* out_fix = std::get_if<trace::LidarFix>(&out.events[i].payload);
    if (in_fix == nullptr) continue;
    const double ts = t.events[i].timestamp;
    if (ts >= 60.0 && ts <= 70.0) {
      CHECK(out_fix->variance.x() == doctest::Approx(100.0 * in_fix->variance.x()));
    } else {
      CHECK(out_fix->variance == in_fix->variance);
    }
  }
}

TEST_CASE("inject: overlapping or out-of-span periods are rejected") {
  const trace::Trace t = trace::generate_synthetic_trace(30.0, {}, noise_free());
  CHECK_THROWS_AS(
      trace::inject_unconfident_periods(t, {{2.0, 10.0, 2.0, 0.0}, {9.0, 12.0, 2.0, 0.0}}, 1),
      ValidationError);
  CHECK_THROWS_AS(trace::inject_unconfident_periods(t, {{-5.0, 3.0, 2.0, 0.0}}, 1),
                  ValidationError);
}

TEST_CASE("inject: the filter is measurably less confident inside the period") {
  trace::NoiseModel n;
  n.seed = 21;
  const trace::Trace base = trace::generate_synthetic_trace(120.0, {}, n);
  const trace::Trace t = trace::inject_unconfident_periods(base, {{50.0, 70.0, 100.0, 0.3}}, 3);
  const auto outputs = attack::run_baseline(t, experiment::default_kf_config());
  double inside = 0.0, outside = 0.0;
  int n_in = 0, n_out = 0;
  for (const auto& [ts, state] : outputs) {
    if (ts >= 52.0 && ts <= 70.0) {
      inside += state.covariance.trace();
      ++n_in;
    } else if (ts > 10.0) {
      outside += state.covariance.trace();
      ++n_out;
    }
  }
  REQUIRE(n_in > 0);
  REQUIRE(n_out > 0);
  CHECK(inside / n_in > outside / n_out);
}

TEST_CASE("io: JSONL round trip is lossless, including gzip") {
  trace::NoiseModel n;
  n.seed = 99;
  trace::Trace t = trace::generate_synthetic_trace(10.0, {}, n);
  t = trace::inject_unconfident_periods(t, {{3.0, 6.0, 50.0, 0.2}}, 4);

  const fs::path plain = temp_file("msfsim_roundtrip.jsonl");
  trace::write_trace(t, plain.string());
  CHECK(traces_equal(t, trace::read_trace(plain.string())));

  const fs::path gz = temp_file("msfsim_roundtrip.jsonl.gz");
  trace::write_trace(t, gz.string());
  CHECK(fs::file_size(gz) < fs::file_size(plain));
  CHECK(traces_equal(t, trace::read_trace(gz.string())));
  fs::remove(plain);
  fs::remove(gz);
}

TEST_CASE("io: unknown payload kind is a parse error naming the line") {
  const fs::path path = temp_file("msfsim_badkind.jsonl");
  {
    std::ofstream out(path);
    out << R"({"t":0.0,"kind":"gps","pos":[0,0],"var":[1,1]})" << "\n";
    out << R"({"t":0.5,"kind":"sonar","pos":[0,0]})" << "\n";
  }
  try {
    trace::read_trace(path.string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 2);
    CHECK(std::string(e.what()).find("sonar") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("io: empty file reads back as an empty trace") {
  const fs::path path = temp_file("msfsim_empty.jsonl");
  { std::ofstream out(path); }
  const trace::Trace t = trace::read_trace(path.string());
  CHECK(t.empty());
  fs::remove(path);
}

TEST_CASE("io: non-monotone timestamps fail validation") {
  const fs::path path = temp_file("msfsim_nonmono.jsonl");
  {
    std::ofstream out(path);
    out << R"({"t":1.0,"kind":"gps","pos":[0,0],"var":[1,1]})" << "\n";
    out << R"({"t":0.5,"kind":"gps","pos":[0,0],"var":[1,1]})" << "\n";
  }
  CHECK_THROWS_AS(trace::read_trace(path.string()), ValidationError);
  fs::remove(path);
}

TEST_CASE("median_gps_uncertainty: constants, odd median, and reordering") {
  trace::Trace t;
  auto add_gps = [&t](double ts, double var) {
    t.events.push_back({ts, trace::GpsFix{{0.0, 0.0}, {var, var}}});
  };
  add_gps(0.0, 2.0);
  add_gps(1.0, 1.0);
  add_gps(2.0, 100.0);
  CHECK(trace::median_gps_uncertainty(t).x() == doctest::Approx(2.0));

  trace::Trace reordered;
  reordered.events.push_back({0.0, trace::GpsFix{{0, 0}, {100.0, 100.0}}});
  reordered.events.push_back({1.0, trace::GpsFix{{0, 0}, {2.0, 2.0}}});
  reordered.events.push_back({2.0, trace::GpsFix{{0, 0}, {1.0, 1.0}}});
  CHECK(trace::median_gps_uncertainty(reordered).x() == doctest::Approx(2.0));

  trace::Trace constant;
  constant.events.push_back({0.0, trace::GpsFix{{0, 0}, {0.25, 0.25}}});
  constant.events.push_back({1.0, trace::GpsFix{{0, 0}, {0.25, 0.25}}});
  CHECK(trace::median_gps_uncertainty(constant).x() == doctest::Approx(0.25));

  trace::Trace no_gps;
  no_gps.events.push_back({0.0, trace::ImuSample{}});
  CHECK_THROWS_AS(trace::median_gps_uncertainty(no_gps), ArgumentError);
}

TEST_CASE("pipeline sanity: noise-free replay tracks truth to 1e-3 m after warm-up") {
  const trace::Trace t = trace::generate_synthetic_trace(30.0, {}, noise_free());
  const auto outputs = attack::run_baseline(t, experiment::default_kf_config());
  for (const auto& [ts, state] : outputs) {
    if (ts < 5.0) continue;
    const GroundTruthPose truth = trace::interpolate_truth(t, ts);
    CHECK((state.position - truth.position).norm() < 1e-3);
  }
}

TEST_CASE("pipeline sanity: default-noise replay stays within 0.05 m RMS of truth") {
  trace::NoiseModel n;
  n.seed = 2024;
  const trace::Trace t = trace::generate_synthetic_trace(120.0, {}, n);
  const auto outputs = attack::run_baseline(t, experiment::default_kf_config());
  double sq_sum = 0.0;
  int count = 0;
  for (const auto& [ts, state] : outputs) {
    if (ts < 5.0) continue;
    const GroundTruthPose truth = trace::interpolate_truth(t, ts);
    sq_sum += (state.position - truth.position).squaredNorm();
    ++count;
  }
  REQUIRE(count > 0);
  CHECK(std::sqrt(sq_sum / count) < 0.05);
}
