#pragma once

// Surrogate verification suite: repeated studies per strategy, scored by the
// noise-free objective of each study's selected configuration.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evaluator.hpp"
#include "study.hpp"

namespace chainsearch::bench {

struct BenchOptions {
  std::size_t studies = 10;
  std::size_t n_trials = 300;
  std::size_t n_reps = 15;
  std::size_t epochs = 80;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  double noise = kSurrogateNoise;
};

inline StudyConfig bench_config(const BenchOptions& o, StrategyKind s, std::size_t study) {
  StudyConfig c;
  c.strategy = s;
  c.arch_kind = ArchKind::Surrogate;
  c.n_trials = o.n_trials;
  c.n_reps = o.n_reps;
  c.epochs = o.epochs;
  c.hyperband.epochs_max = o.epochs;
  c.jobs = o.jobs;
  c.surrogate_noise = o.noise;
  c.master_seed = hash_words(o.seed, {tag_hash("bench"), study});
  return c;
}

// Noise-free objective of the selected best configuration of each study.
inline std::vector<double> best_clean(const BenchOptions& o, StrategyKind s) {
  std::vector<double> out;
  for (std::size_t i = 0; i < o.studies; ++i) {
    const auto log = run_study(bench_config(o, s, i));
    const auto b = log.best_trial();
    out.push_back(b ? surrogate_clean_auc(log.trials[*b].result.config) : 0.0);
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::size_t count_at_least(const std::vector<double>& v, double x) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double y) { return y >= x; }));
}

inline std::size_t count_above(const std::vector<double>& v, double x) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double y) { return y > x; }));
}

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
  bool gating = true;
};

struct BenchReport {
  std::map<std::string, std::vector<double>> best;
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return !c.gating || c.pass; });
  }
};

// Gating checks compare tpe and hyperband against the known optimum;
// comparisons against the random baseline are reported alongside.
inline BenchReport run_bench(const BenchOptions& o) {
  BenchReport r;
  for (auto s : {StrategyKind::Random, StrategyKind::Tpe, StrategyKind::Hyperband, StrategyKind::Reinforce})
    r.best[to_string(s)] = best_clean(o, s);
  const auto need = (o.studies * 8 + 9) / 10;
  const double target = kSurrogateOptimum - 0.03;
  const double rand_median = median(r.best["random"]);
  auto frac = [&](std::size_t k) { return std::to_string(k) + "/" + std::to_string(o.studies); };
  for (const char* s : {"tpe", "hyperband"}) {
    const auto k = count_at_least(r.best[s], target);
    r.checks.push_back({std::string(s) + " best >= optimum - 0.03", k >= need, frac(k)});
  }
  const auto rl_need = (o.studies * 6 + 9) / 10;
  for (const char* s : {"tpe", "hyperband", "reinforce"}) {
    const auto k = count_above(r.best[s], rand_median);
    const auto n = std::string(s) == "reinforce" ? rl_need : need;
    r.checks.push_back({std::string(s) + " beats random median best", k >= n, frac(k), false});
  }
  return r;
}

}  // namespace chainsearch::bench
