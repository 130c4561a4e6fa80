#include "msfsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msfsim/errors.hpp"

namespace msfsim::analysis {

using nlohmann::json;

RoadGeometry local_road() { return RoadGeometry{2.70, 2.11, 0.60, RoadType::kLocal}; }
RoadGeometry highway_road() { return RoadGeometry{3.60, 2.11, 1.20, RoadType::kHighway}; }

GoalThresholds goal_thresholds(const RoadGeometry& geom) {
  if (!(geom.lane_width > geom.car_width) || !(geom.car_width > 0.0) ||
      !(geom.shoulder_width >= 0.0)) {
    throw ArgumentError("goal_thresholds: need L > C > 0 and S >= 0");
  }
  GoalThresholds g;
  g.touch_lane_line = 0.5 * (geom.lane_width - geom.car_width);
  g.off_road = g.touch_lane_line + geom.shoulder_width;
  g.wrong_way = 0.5 * (geom.lane_width + geom.car_width);
  return g;
}

double lateral_deviation(const Vec2& pos, std::span<const GroundTruthPose> trajectory) {
  if (trajectory.size() < 2) throw ArgumentError("lateral_deviation: need >= 2 trajectory poses");

  double best_dist2 = std::numeric_limits<double>::infinity();
  double best_signed = 0.0;
  bool found = false;
  for (std::size_t i = 0; i + 1 < trajectory.size(); ++i) {
    const Vec2 a = trajectory[i].position;
    const Vec2 b = trajectory[i + 1].position;
    const Vec2 seg = b - a;
    const double len2 = seg.squaredNorm();
    if (len2 <= 0.0) continue;
    const double t = std::clamp((pos - a).dot(seg) / len2, 0.0, 1.0);
    const Vec2 proj = a + t * seg;
    const Vec2 off = pos - proj;
    const double d2 = off.squaredNorm();
    if (d2 < best_dist2) {
      best_dist2 = d2;
      const double cross = seg.x() * off.y() - seg.y() * off.x();
      best_signed = std::copysign(std::sqrt(d2), cross == 0.0 ? 1.0 : cross);
      if (d2 == 0.0) best_signed = 0.0;
      found = true;
    }
  }
  if (!found) throw ArgumentError("lateral_deviation: degenerate (zero-length) trajectory");
  return best_signed;
}

ExponentialFit fit_exponential(std::span<const double> devs) {
  const std::size_t n = devs.size();
  if (n < 3) throw ArgumentError("fit_exponential: need >= 3 points");

  ExponentialFit best;
  best.mse = std::numeric_limits<double>::infinity();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int step = 0; step <= 2000; ++step) {
    const double a = 1.0 + 0.001 * step;
    double pow_ax = 1.0;
    double sum_e = 0.0, sum_e2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pow_ax *= a;  // a^(i+1)
      const double e = devs[i] - pow_ax;
      sum_e += e;
      sum_e2 += e * e;
    }
    const double mean_e = sum_e * inv_n;
    const double mse = std::max(0.0, sum_e2 * inv_n - mean_e * mean_e);
    if (mse < best.mse) {
      best.a = a;
      best.b = mean_e;
      best.mse = mse;
    }
  }
  return best;
}

namespace {

Mat2 checked_inverse(const Mat2& s, const char* what) {
  const double det = s.determinant();
  const double scale = s.cwiseAbs().maxCoeff();
  if (!std::isfinite(det) || std::abs(det) <= 1e-15 * std::max(scale * scale, 1e-300)) {
    throw LinAlgError(std::string("closed_form_dev2: singular ") + what);
  }
  return s.inverse();
}

}  // namespace

ClosedFormDeviations closed_form_dev2(const Mat5& p0, const Mat2& r1, const Mat2& r1_lidar,
                                      const Mat2& r2, const Vec2& delta1, const Vec2& delta2,
                                      const Vec2& delta_lidar, const Mat5& f1, const Mat2x5& h) {
  ClosedFormDeviations out;

  const Mat2 s1 = h * p0 * h.transpose() + r1;
  const Mat5x2 k1 = p0 * h.transpose() * checked_inverse(s1, "first innovation covariance");
  out.dev1 = k1 * delta1;
  const Mat5 p1 = p0 - k1 * h * p0;

  out.dev_imu = f1 * out.dev1;
  const Mat5 p_imu = f1 * p1 * f1.transpose();

  const Mat2 s_lidar = h * p_imu * h.transpose() + r1_lidar;
  const Mat5x2 k_lidar =
      p_imu * h.transpose() * checked_inverse(s_lidar, "lidar innovation covariance");
  out.dev_lidar = out.dev_imu - k_lidar * (delta_lidar + h * out.dev_imu);
  const Mat5 p_lidar = p_imu - k_lidar * h * p_imu;

  const Mat2 s2 = h * p_lidar * h.transpose() + r2;
  const Mat5x2 k2 = p_lidar * h.transpose() * checked_inverse(s2, "second innovation covariance");
  out.dev2 = out.dev_lidar + k2 * (delta2 - h * out.dev_lidar);
  return out;
}

FactorSample extract_factors(const attack::WindowLog& window_log,
                             const attack::AttackOutcome& outcome) {
  const std::size_t n = window_log.cov_trace.size();
  if (n == 0) throw ArgumentError("extract_factors: empty window log");

  // Onset of exponential growth: first epoch whose fitted-curve increment
  // a^(x+1) - a^x exceeds twice the first increment, i.e. a^i > 2.
  std::size_t onset = 0;
  const double a = outcome.fitted_base;
  if (a > 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      if (std::pow(a, static_cast<double>(i)) > 2.0) {
        onset = i;
        break;
      }
    }
  }
  if (onset >= n) onset = n - 1;

  FactorSample sample;
  sample.p0 = window_log.cov_trace[onset];
  const double tail_start =
      window_log.epoch_times.size() == n ? window_log.epoch_times[onset] : 0.0;
  auto tail_mean = [tail_start](const std::vector<std::pair<double, double>>& series) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& [t, v] : series) {
      if (t >= tail_start) {
        sum += v;
        ++count;
      }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  };
  sample.r_lidar = tail_mean(window_log.lidar_variance);
  sample.delta_lidar = tail_mean(window_log.lidar_offset);
  sample.imu = tail_mean(window_log.imu_accel_mag);
  sample.takeover = outcome.fitted_base > kTakeoverBaseThreshold;
  return sample;
}

namespace {

// Continued-fraction kernel of the regularized incomplete beta (Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

PearsonResult pearson(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (n != ys.size()) throw ArgumentError("pearson: length mismatch");
  if (n < 3) throw ArgumentError("pearson: need n >= 3");

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw DegenerateInputError("pearson: zero-variance input");
  }
  PearsonResult out;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double one_minus_r2 = 1.0 - out.r * out.r;
  if (one_minus_r2 <= 1e-15) {
    out.p = 0.0;
    return out;
  }
  const double t2 = out.r * out.r * df / one_minus_r2;
  out.p = std::clamp(incomplete_beta(0.5 * df, 0.5, df / (df + t2)), 0.0, 1.0);
  return out;
}

namespace {

// C(n, k) for n <= 62 (fits in 64 bits).
std::uint64_t binom_u64(long long n, long long k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (long long i = 1; i <= k; ++i) {
    result = result * static_cast<unsigned __int128>(n - k + i) / static_cast<unsigned>(i);
  }
  return static_cast<std::uint64_t>(result);
}

double log_choose(long long n, long long k) {
  return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(k + 1)) -
         std::lgamma(static_cast<double>(n - k + 1));
}

}  // namespace

FisherResult fisher_exact(const std::array<std::array<long long, 2>, 2>& table) {
  const long long n11 = table[0][0], n12 = table[0][1];
  const long long n21 = table[1][0], n22 = table[1][1];
  if (n11 < 0 || n12 < 0 || n21 < 0 || n22 < 0) {
    throw ArgumentError("fisher_exact: counts must be >= 0");
  }
  const long long r1 = n11 + n12, r2 = n21 + n22;
  const long long c1 = n11 + n21, c2 = n12 + n22;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) {
    throw DegenerateInputError("fisher_exact: zero margin");
  }
  const long long total = r1 + r2;

  FisherResult out;
  if (n12 * n21 == 0) {
    out.odds_ratio = std::numeric_limits<double>::infinity();
  } else {
    out.odds_ratio = static_cast<double>(n11) * static_cast<double>(n22) /
                     (static_cast<double>(n12) * static_cast<double>(n21));
  }

  const long long k_min = std::max<long long>(0, r1 - c2);
  const long long k_max = std::min(r1, c1);

  if (total <= 62) {
    // Exact integer enumeration; probabilities share denominator C(total, r1).
    const unsigned __int128 obs = static_cast<unsigned __int128>(binom_u64(c1, n11)) *
                                  binom_u64(c2, r1 - n11);
    unsigned __int128 num = 0;
    for (long long k = k_min; k <= k_max; ++k) {
      const unsigned __int128 w = static_cast<unsigned __int128>(binom_u64(c1, k)) *
                                  binom_u64(c2, r1 - k);
      if (w <= obs) num += w;
    }
    out.p = std::min(1.0, static_cast<double>(static_cast<long double>(num) /
                                              static_cast<long double>(binom_u64(total, r1))));
    return out;
  }

  const double log_denominator = log_choose(total, r1);
  const double log_obs = log_choose(c1, n11) + log_choose(c2, r1 - n11) - log_denominator;
  double p = 0.0;
  for (long long k = k_min; k <= k_max; ++k) {
    const double lp = log_choose(c1, k) + log_choose(c2, r1 - k) - log_denominator;
    if (lp <= log_obs + 1e-7) p += std::exp(lp);
  }
  out.p = std::min(1.0, p);
  return out;
}

SuccessReport success_metrics(std::span<const AttackRunRecord> records, double goal,
                              double min_duration) {
  if (records.empty()) throw ArgumentError("success_metrics: empty grid");

  std::set<std::pair<double, double>> combos;
  std::set<double> starts;
  std::set<int> sides;
  std::map<std::tuple<double, double, int, double>, const AttackRunRecord*> index;
  for (const auto& rec : records) {
    combos.insert({rec.d, rec.f});
    starts.insert(rec.start_time);
    sides.insert(rec.side == attack::Side::kLeft ? 0 : 1);
    index[{rec.d, rec.f, rec.side == attack::Side::kLeft ? 0 : 1, rec.start_time}] = &rec;
  }

  SuccessReport report;
  report.goal = goal;
  report.min_duration = min_duration;
  for (const auto& [d, f] : combos) {
    SuccessCell cell;
    cell.d = d;
    cell.f = f;
    std::vector<double> times;
    for (double start : starts) {
      std::optional<double> best_time;
      for (int side : sides) {
        const auto it = index.find({d, f, side, start});
        if (it == index.end()) {
          throw ArgumentError("success_metrics: missing outcome for a (d, f, side, start) cell");
        }
        const auto& outcome = it->second->outcome;
        // Recorded goals are matched with a tolerance; goal values may travel
        // through serialization or be recomputed from road geometry.
        auto stored = outcome.success.lower_bound(goal - 1e-9);
        const bool have_stored =
            stored != outcome.success.end() && std::abs(stored->first - goal) <= 1e-9;
        const auto t = have_stored ? stored->second : success_time(outcome, goal);
        if (t.has_value() && *t <= min_duration && (!best_time || *t < *best_time)) {
          best_time = t;
        }
      }
      ++cell.n_starts;
      if (best_time.has_value()) {
        ++cell.n_success;
        times.push_back(*best_time);
      }
    }
    cell.success_rate =
        cell.n_starts == 0 ? 0.0 : static_cast<double>(cell.n_success) / cell.n_starts;
    if (!times.empty()) {
      double mean = 0.0;
      for (double t : times) mean += t;
      mean /= static_cast<double>(times.size());
      cell.mean_success_time = mean;
      if (times.size() > 1) {
        double var = 0.0;
        for (double t : times) var += (t - mean) * (t - mean);
        cell.std_success_time = std::sqrt(var / static_cast<double>(times.size() - 1));
      }
    }
    report.cells.push_back(cell);
  }

  std::vector<SuccessCell> ranked = report.cells;
  std::stable_sort(ranked.begin(), ranked.end(), [](const SuccessCell& a, const SuccessCell& b) {
    if (a.success_rate != b.success_rate) return a.success_rate > b.success_rate;
    if (a.n_success > 0 && b.n_success > 0 && a.mean_success_time != b.mean_success_time) {
      return a.mean_success_time < b.mean_success_time;
    }
    if (a.d != b.d) return a.d < b.d;
    return a.f < b.f;
  });
  report.best = ranked.front();
  report.top3.assign(ranked.begin(), ranked.begin() + std::min<std::size_t>(3, ranked.size()));
  return report;
}

namespace {

json cell_to_json(const SuccessCell& c) {
  return json{{"d", c.d},
              {"f", c.f},
              {"success_rate", c.success_rate},
              {"mean_success_time", c.mean_success_time},
              {"std_success_time", c.std_success_time},
              {"n_success", c.n_success},
              {"n_starts", c.n_starts}};
}

}  // namespace

std::string success_report_to_json(const SuccessReport& report) {
  json j;
  j["goal"] = report.goal;
  j["min_duration"] = report.min_duration;
  j["best"] = cell_to_json(report.best);
  j["top3"] = json::array();
  for (const auto& c : report.top3) j["top3"].push_back(cell_to_json(c));
  j["cells"] = json::array();
  for (const auto& c : report.cells) j["cells"].push_back(cell_to_json(c));
  return j.dump(2);
}

std::string success_report_to_csv(const SuccessReport& report) {
  std::set<double> ds, fs;
  std::map<std::pair<double, double>, double> rate;
  for (const auto& c : report.cells) {
    ds.insert(c.d);
    fs.insert(c.f);
    rate[{c.d, c.f}] = c.success_rate;
  }
  std::ostringstream out;
  out.precision(10);
  out << "d\\f";
  for (double f : fs) out << ',' << f;
  out << '\n';
  for (double d : ds) {
    out << d;
    for (double f : fs) {
      out << ',';
      const auto it = rate.find({d, f});
      if (it != rate.end()) out << it->second;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace msfsim::analysis
