#include "msfsim/profiler.hpp"

#include <algorithm>
#include <cmath>

#include "msfsim/errors.hpp"

namespace msfsim::profiler {

namespace {

std::vector<double> arange(double lo, double hi, double step) {
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double v = lo + step * i;
    if (v > hi + 1e-9) break;
    out.push_back(v);
  }
  return out;
}

void validate_config(const ProfilingConfig& cfg) {
  auto ascending = [](const std::vector<double>& v) {
    return !v.empty() && std::is_sorted(v.begin(), v.end()) &&
           std::adjacent_find(v.begin(), v.end()) == v.end();
  };
  if (!ascending(cfg.grid_d) || !ascending(cfg.grid_f)) {
    throw ValidationError("profiler: grids must be non-empty and strictly ascending");
  }
  if (!(cfg.min_success_rate > 0.0 && cfg.min_success_rate <= 1.0)) {
    throw ValidationError("profiler: min success rate must be in (0, 1]");
  }
  if (!(cfg.safe_threshold > 0.0)) throw ValidationError("profiler: safe threshold must be > 0");
  if (cfg.trials_per_round < 1) throw ValidationError("profiler: need >= 1 trial per round");
}

}  // namespace

std::vector<double> default_grid_d() { return arange(0.3, 2.0, 0.1); }
std::vector<double> default_grid_f() { return arange(1.1, 2.0, 0.1); }

ProfilingResult offline_profile(const TrialRunner& trial_runner, const ProfilingConfig& cfg,
                                std::vector<ProfilingRound>* rounds) {
  validate_config(cfg);

  ProfilingResult result;
  result.d = cfg.grid_d.front();
  result.f = cfg.grid_f.front();
  const int n = cfg.trials_per_round;

  for (double f : cfg.grid_f) {
    for (double d : cfg.grid_d) {
      const int success_count = trial_runner(d, f, n, cfg.safe_threshold);
      if (success_count < 0 || success_count > n) {
        throw ContractViolationError("offline_profile: trial runner returned a count outside [0, N]");
      }
      result.cost += n;
      const double rate = static_cast<double>(success_count) / n;
      if (rounds != nullptr) rounds->push_back({d, f, success_count, rate});
      if (rate >= cfg.min_success_rate) {
        result.d = d;
        result.f = f;
        result.best_rate = rate;
        result.exhausted = false;
        return result;
      }
      if (rate > result.best_rate) {
        result.d = d;
        result.f = f;
        result.best_rate = rate;
      }
    }
  }
  result.exhausted = true;
  return result;
}

bool safe_trial(const trace::Trace& t, double start, double d, double f,
                const ProfilingConfig& cfg, const kf::KfConfig& kf_config, attack::Side side) {
  attack::BaselineCache cache(t, kf_config);
  return safe_trial(cache, start, d, f, cfg, side);
}

bool safe_trial(const attack::BaselineCache& cache, double start, double d, double f,
                const ProfilingConfig& cfg, attack::Side side,
                attack::AttackOutcome* outcome_out) {
  if (!(d > 0.0) || !(f >= 1.0)) throw ArgumentError("safe_trial: need d > 0 and f >= 1");

  attack::SpoofSchedule sched;
  sched.kind = attack::SpoofSchedule::Kind::kRipper;
  sched.d = d;
  sched.f = f;

  attack::RunOptions opt;
  opt.side = side;
  opt.spoof_variance = trace::median_gps_uncertainty(cache.get_trace());
  opt.max_duration = cfg.trial_cap;
  opt.safe_stop_threshold = cfg.safe_threshold;
  opt.goals = {cfg.safe_threshold};

  const attack::AttackOutcome outcome = attack::run_attack(cache, start, sched, opt);
  if (outcome_out != nullptr) *outcome_out = outcome;
  const auto reached = attack::success_time(outcome, cfg.safe_threshold);
  return reached.has_value() && *reached <= cfg.trial_cap;
}

}  // namespace msfsim::profiler
