#pragma once

#include <functional>
#include <vector>

#include "msfsim/attack.hpp"
#include "msfsim/kf.hpp"
#include "msfsim/trace.hpp"

namespace msfsim::profiler {

std::vector<double> default_grid_d();  // 0.3 .. 2.0, step 0.1
std::vector<double> default_grid_f();  // 1.1 .. 2.0, step 0.1

struct ProfilingConfig {
  std::vector<double> grid_d = default_grid_d();
  std::vector<double> grid_f = default_grid_f();
  int trials_per_round = 40;      // N
  double min_success_rate = 0.5;  // S
  double safe_threshold = 0.45;   // T, m
  double trial_cap = 90.0;        // s per trial
};

struct ProfilingResult {
  double d = 0.0;
  double f = 0.0;
  long long cost = 0;      // total trials spent
  double best_rate = 0.0;  // rate of the returned combination during profiling
  bool exhausted = false;  // grid exhausted without reaching the minimum rate
};

struct ProfilingRound {
  double d = 0.0;
  double f = 0.0;
  int success_count = 0;
  double rate = 0.0;
};

// Runs N attack trials at (d, f) with safe threshold t; returns how many
// reached the threshold.
using TrialRunner = std::function<int(double d, double f, int n, double t)>;

// Grid scan, f ascending outer and d ascending inner, returning the first
// combination whose profiled rate reaches the minimum success rate, else the
// best seen (strictly-greater updates).
ProfilingResult offline_profile(const TrialRunner& trial_runner, const ProfilingConfig& cfg,
                                std::vector<ProfilingRound>* rounds = nullptr);

// One stealthy profiling trial: a two-stage attack that reverts to authentic
// GPS once the deviation reaches the safe threshold. True when the threshold
// was reached within the trial cap.
bool safe_trial(const trace::Trace& t, double start, double d, double f,
                const ProfilingConfig& cfg, const kf::KfConfig& kf_config,
                attack::Side side = attack::Side::kLeft);
bool safe_trial(const attack::BaselineCache& cache, double start, double d, double f,
                const ProfilingConfig& cfg, attack::Side side = attack::Side::kLeft,
                attack::AttackOutcome* outcome_out = nullptr);

}  // namespace msfsim::profiler
