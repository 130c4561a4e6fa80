#include "msfsim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "msfsim/errors.hpp"
#include "msfsim/rng.hpp"

namespace msfsim::trace {

using nlohmann::json;

int kind_rank(const Payload& p) {
  return static_cast<int>(
      std::visit([](const auto& v) -> int {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GroundTruthPose>) return 0;
        if constexpr (std::is_same_v<T, ImuSample>) return 1;
        if constexpr (std::is_same_v<T, LidarFix>) return 2;
        return 3;  // GpsFix
      }, p));
}

const char* kind_name(const Payload& p) {
  switch (kind_rank(p)) {
    case 0: return "truth";
    case 1: return "imu";
    case 2: return "lidar";
    default: return "gps";
  }
}

double Trace::begin_time() const {
  if (events.empty()) throw ArgumentError("trace: empty");
  return events.front().timestamp;
}

double Trace::end_time() const {
  if (events.empty()) throw ArgumentError("trace: empty");
  return events.back().timestamp;
}

namespace {

void sort_events(std::vector<TraceEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const TraceEvent& a, const TraceEvent& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return kind_rank(a.payload) < kind_rank(b.payload);
  });
}

GroundTruthPose straight_pose(const SyntheticScenario& sc, double t) {
  GroundTruthPose pose;
  pose.heading = normalize_angle(sc.heading);
  pose.velocity = sc.speed_mps * heading_dir(pose.heading);
  pose.position = sc.start + pose.velocity * t;
  pose.timestamp = t;
  return pose;
}

std::size_t sample_count(double duration, double rate) {
  // Samples at k/rate for k >= 0, strictly before `duration`.
  return static_cast<std::size_t>(std::ceil(duration * rate - 1e-9));
}

}  // namespace

Trace generate_synthetic_trace(double duration, const SyntheticScenario& scenario,
                               const NoiseModel& noise) {
  if (!(duration > 0.0)) throw ArgumentError("generate_synthetic_trace: duration must be > 0");

  Trace out;
  Rng rng_imu(mix_seed(noise.seed, 1));
  Rng rng_lidar(mix_seed(noise.seed, 2));
  Rng rng_gps(mix_seed(noise.seed, 3));

  const std::size_t n_truth = sample_count(duration, kTruthRateHz);
  for (std::size_t k = 0; k < n_truth; ++k) {
    const double t = static_cast<double>(k) / kTruthRateHz;
    out.events.push_back({t, straight_pose(scenario, t)});
  }
  const std::size_t n_imu = sample_count(duration, kImuRateHz);
  for (std::size_t k = 0; k < n_imu; ++k) {
    const double t = static_cast<double>(k) / kImuRateHz;
    ImuSample s;
    s.accel_body = {rng_imu.gaussian(0.0, noise.imu_accel_sigma),
                    rng_imu.gaussian(0.0, noise.imu_accel_sigma)};
    s.yaw_rate = rng_imu.gaussian(0.0, noise.imu_gyro_sigma);
    out.events.push_back({t, s});
  }
  const std::size_t n_lidar = sample_count(duration, kLidarRateHz);
  for (std::size_t k = 0; k < n_lidar; ++k) {
    const double t = static_cast<double>(k) / kLidarRateHz;
    LidarFix f;
    const GroundTruthPose pose = straight_pose(scenario, t);
    f.position = pose.position + Vec2{rng_lidar.gaussian(0.0, noise.lidar_pos_sigma),
                                      rng_lidar.gaussian(0.0, noise.lidar_pos_sigma)};
    f.variance = {noise.lidar_var_nominal, noise.lidar_var_nominal};
    out.events.push_back({t, f});
  }
  const std::size_t n_gps = sample_count(duration, kGpsRateHz);
  for (std::size_t k = 0; k < n_gps; ++k) {
    const double t = static_cast<double>(k) / kGpsRateHz;
    GpsFix f;
    const GroundTruthPose pose = straight_pose(scenario, t);
    f.position = pose.position + Vec2{rng_gps.gaussian(0.0, noise.gps_pos_sigma),
                                      rng_gps.gaussian(0.0, noise.gps_pos_sigma)};
    f.variance = {noise.gps_var_nominal, noise.gps_var_nominal};
    out.events.push_back({t, f});
  }
  sort_events(out.events);
  return out;
}

Trace inject_unconfident_periods(const Trace& t, const std::vector<UnconfidentPeriod>& periods,
                                 std::uint64_t seed) {
  if (t.empty()) throw ArgumentError("inject_unconfident_periods: empty trace");
  std::vector<UnconfidentPeriod> sorted = periods;
  std::sort(sorted.begin(), sorted.end(),
            [](const UnconfidentPeriod& a, const UnconfidentPeriod& b) { return a.start < b.start; });
  const double t0 = t.begin_time(), t1 = t.end_time();
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& p = sorted[i];
    if (!(p.start < p.end)) throw ValidationError("unconfident period: start must precede end");
    if (!(p.lidar_var_scale >= 1.0)) throw ValidationError("unconfident period: scale must be >= 1");
    if (!(p.lidar_bias_sigma >= 0.0)) throw ValidationError("unconfident period: bias sigma must be >= 0");
    if (p.start < t0 - 1e-9 || p.end > t1 + 1e-9) {
      throw ValidationError("unconfident period outside trace time span");
    }
    if (i > 0 && sorted[i - 1].end > p.start) {
      throw ValidationError("unconfident periods overlap");
    }
  }

  // One constant bias draw per period.
  std::vector<Vec2> biases(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    Rng rng(mix_seed(seed, i));
    biases[i] = {rng.gaussian(0.0, sorted[i].lidar_bias_sigma),
                 rng.gaussian(0.0, sorted[i].lidar_bias_sigma)};
  }

  Trace out = t;
  for (auto& ev : out.events) {
    auto* fix = std::get_if<LidarFix>(&ev.payload);
    if (fix == nullptr) continue;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (ev.timestamp >= sorted[i].start && ev.timestamp <= sorted[i].end) {
        fix->variance *= sorted[i].lidar_var_scale;
        fix->position += biases[i];
        break;
      }
    }
  }
  return out;
}

namespace {

json event_to_json(const TraceEvent& ev) {
  json j;
  j["t"] = ev.timestamp;
  j["kind"] = kind_name(ev.payload);
  std::visit([&j](const auto& v) {
    using T = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<T, ImuSample>) {
      j["accel"] = {v.accel_body.x(), v.accel_body.y()};
      j["yaw_rate"] = v.yaw_rate;
    } else if constexpr (std::is_same_v<T, GpsFix> || std::is_same_v<T, LidarFix>) {
      j["pos"] = {v.position.x(), v.position.y()};
      j["var"] = {v.variance.x(), v.variance.y()};
    } else {
      j["pos"] = {v.position.x(), v.position.y()};
      j["vel"] = {v.velocity.x(), v.velocity.y()};
      j["heading"] = v.heading;
    }
  }, ev.payload);
  return j;
}

Vec2 vec2_field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2) {
    throw ParseError(std::string("trace: missing or malformed field '") + key + "'", line);
  }
  return {j[key][0].get<double>(), j[key][1].get<double>()};
}

TraceEvent event_from_json(const json& j, std::size_t line) {
  if (!j.contains("t") || !j.contains("kind")) {
    throw ParseError("trace: event needs 't' and 'kind'", line);
  }
  TraceEvent ev;
  ev.timestamp = j["t"].get<double>();
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "imu") {
    ImuSample s;
    s.accel_body = vec2_field(j, "accel", line);
    s.yaw_rate = j.value("yaw_rate", 0.0);
    ev.payload = s;
  } else if (kind == "gps" || kind == "lidar") {
    Vec2 pos = vec2_field(j, "pos", line);
    Vec2 var = vec2_field(j, "var", line);
    if (kind == "gps") ev.payload = GpsFix{pos, var};
    else ev.payload = LidarFix{pos, var};
  } else if (kind == "truth") {
    GroundTruthPose pose;
    pose.position = vec2_field(j, "pos", line);
    pose.velocity = vec2_field(j, "vel", line);
    if (!j.contains("heading")) throw ParseError("trace: truth event needs 'heading'", line);
    pose.heading = j["heading"].get<double>();
    pose.timestamp = ev.timestamp;
    ev.payload = pose;
  } else {
    throw ParseError("trace: unknown event kind '" + kind + "'", line);
  }
  return ev;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void validate_trace(const Trace& t) {
  double last_t = -std::numeric_limits<double>::infinity();
  double last_by_kind[4] = {-1e300, -1e300, -1e300, -1e300};
  for (const auto& ev : t.events) {
    if (!std::isfinite(ev.timestamp)) throw ValidationError("trace: non-finite timestamp");
    if (ev.timestamp < last_t) throw ValidationError("trace: timestamps not sorted");
    last_t = ev.timestamp;
    const int k = kind_rank(ev.payload);
    if (ev.timestamp <= last_by_kind[k]) {
      throw ValidationError(std::string("trace: non-increasing timestamps for kind '") +
                            kind_name(ev.payload) + "'");
    }
    last_by_kind[k] = ev.timestamp;
  }
}

void write_trace(const Trace& t, const std::string& path) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::string buffer;
  buffer.reserve(t.events.size() * 64);
  for (const auto& ev : t.events) {
    buffer += event_to_json(ev).dump();
    buffer += '\n';
  }
  if (ends_with(path, ".gz")) {
    gzFile gz = gzopen(path.c_str(), "wb");
    if (gz == nullptr) throw ValidationError("write_trace: cannot open " + path);
    const int written = gzwrite(gz, buffer.data(), static_cast<unsigned>(buffer.size()));
    gzclose(gz);
    if (written != static_cast<int>(buffer.size())) {
      throw ValidationError("write_trace: short gzip write to " + path);
    }
    return;
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("write_trace: cannot open " + path);
  out << buffer;
  if (!out) throw ValidationError("write_trace: write failed for " + path);
}

namespace {

std::string read_whole_file(const std::string& path) {
  if (ends_with(path, ".gz")) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (gz == nullptr) throw ValidationError("read_trace: cannot open " + path);
    std::string data;
    char chunk[1 << 16];
    int n;
    while ((n = gzread(gz, chunk, sizeof(chunk))) > 0) data.append(chunk, static_cast<size_t>(n));
    const bool bad = (n < 0);
    gzclose(gz);
    if (bad) throw ValidationError("read_trace: gzip read error in " + path);
    return data;
  }
  std::ifstream in(path);
  if (!in) throw ValidationError("read_trace: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Trace read_trace(const std::string& path) {
  const std::string data = read_whole_file(path);
  Trace out;
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= data.size()) {
    std::size_t end = data.find('\n', begin);
    if (end == std::string::npos) end = data.size();
    ++line_no;
    const std::string_view line(data.data() + begin, end - begin);
    begin = end + 1;
    if (line.empty()) {
      if (begin > data.size()) break;
      continue;
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("trace: invalid JSON", line_no);
    out.events.push_back(event_from_json(j, line_no));
  }
  validate_trace(out);
  return out;
}

Vec2 median_gps_uncertainty(const Trace& t) {
  std::vector<double> xs, ys;
  for (const auto& ev : t.events) {
    if (const auto* fix = std::get_if<GpsFix>(&ev.payload)) {
      xs.push_back(fix->variance.x());
      ys.push_back(fix->variance.y());
    }
  }
  if (xs.empty()) throw ArgumentError("median_gps_uncertainty: trace has no GPS events");
  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  return {median(xs), median(ys)};
}

Trace without_lidar(const Trace& t) {
  Trace out;
  out.events.reserve(t.events.size());
  for (const auto& ev : t.events) {
    if (!std::holds_alternative<LidarFix>(ev.payload)) out.events.push_back(ev);
  }
  return out;
}

GroundTruthPose interpolate_truth(const Trace& t, double time) {
  const GroundTruthPose* prev = nullptr;
  const GroundTruthPose* next = nullptr;
  for (const auto& ev : t.events) {
    const auto* pose = std::get_if<GroundTruthPose>(&ev.payload);
    if (pose == nullptr) continue;
    if (ev.timestamp <= time) {
      prev = pose;
    } else {
      next = pose;
      break;
    }
  }
  if (prev == nullptr && next == nullptr) {
    throw ArgumentError("interpolate_truth: trace has no truth events");
  }
  if (prev == nullptr) return *next;
  if (next == nullptr) return *prev;
  const double span = next->timestamp - prev->timestamp;
  const double a = span > 0.0 ? (time - prev->timestamp) / span : 0.0;
  GroundTruthPose out;
  out.position = (1.0 - a) * prev->position + a * next->position;
  out.velocity = (1.0 - a) * prev->velocity + a * next->velocity;
  out.heading = normalize_angle(prev->heading + a * normalize_angle(next->heading - prev->heading));
  out.timestamp = time;
  return out;
}

}  // namespace msfsim::trace
