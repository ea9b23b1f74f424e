#pragma once

// Bracket planning and successive halving with checkpoint-resumed survivors.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "evaluator.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "search_space.hpp"

namespace chainsearch::hyperband {

struct HyperbandParams {
  std::size_t epochs_max = 80;
  std::size_t eta = 3;
};

inline void check_params(const HyperbandParams& p) {
  if (p.epochs_max < 1) throw DomainError("hyperband epochs_max must be >= 1");
  if (p.eta < 2) throw DomainError("hyperband eta must be >= 2");
}

struct Rung {
  std::size_t train_to = 0;  // cumulative epochs after this rung
  std::size_t keep = 0;      // configurations trained at this rung
  bool operator==(const Rung&) const = default;
};

struct BracketPlan {
  std::size_t s = 0;
  std::size_t n_configs = 0;
  std::size_t n_initial = 0;
  std::vector<Rung> rungs;
  std::size_t total_epochs = 0;  // with checkpoint resumption, per replication

  bool operator==(const BracketPlan&) const = default;
};

namespace detail {

inline std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

// ceil(num / den) for positive integers.
inline std::size_t ceil_div(std::size_t num, std::size_t den) { return (num + den - 1) / den; }

}  // namespace detail

// Largest s with eta^s <= epochs_max.
inline std::size_t s_max(const HyperbandParams& p) {
  check_params(p);
  std::size_t s = 0, pw = 1;
  while (pw <= p.epochs_max / p.eta) {
    pw *= p.eta;
    ++s;
  }
  return s;
}

// Plan for bracket s, optionally truncated to `n_configs` samples.
inline BracketPlan plan_bracket(const HyperbandParams& p, std::size_t s,
                                std::size_t cap = std::numeric_limits<std::size_t>::max()) {
  const std::size_t smax = s_max(p);
  if (s > smax) throw DomainError("bracket index exceeds s_max");
  BracketPlan b;
  b.s = s;
  const std::size_t eta_s = detail::ipow(p.eta, s);
  b.n_configs = std::min(detail::ceil_div((smax + 1) * eta_s, s + 1), cap);
  if (b.n_configs == 0) throw DomainError("bracket with no configurations");
  b.n_initial = std::max<std::size_t>(1, detail::ceil_div(p.epochs_max, eta_s));
  std::size_t prev = 0;
  for (std::size_t i = 0; i <= s; ++i) {
    const std::size_t eta_i = detail::ipow(p.eta, i);
    Rung r;
    // ceil(epochs_max * eta^i / eta^s), the unrounded initial budget grown by eta^i
    r.train_to = std::min(p.epochs_max, std::max<std::size_t>(1, detail::ceil_div(p.epochs_max * eta_i, eta_s)));
    r.keep = std::max<std::size_t>(1, b.n_configs / eta_i);
    b.total_epochs += r.keep * (r.train_to - prev);
    prev = r.train_to;
    b.rungs.push_back(r);
  }
  return b;
}

inline std::vector<BracketPlan> plan_brackets(const HyperbandParams& p) {
  std::vector<BracketPlan> out;
  for (std::size_t s = s_max(p) + 1; s-- > 0;) out.push_back(plan_bracket(p, s));
  return out;
}

inline std::size_t total_configs(const std::vector<BracketPlan>& plans) {
  std::size_t n = 0;
  for (const auto& b : plans) n += b.n_configs;
  return n;
}

// One rung evaluation of one configuration.
struct Evaluation {
  std::size_t bracket = 0;
  std::size_t rung = 0;
  std::uint64_t config_id = 0;  // global sample index, also the replication-seed key
  TrialResult result;
};

using Sink = std::function<void(const Evaluation&)>;

struct BracketResult {
  std::vector<Evaluation> evaluations;
  std::vector<std::uint64_t> finalists;  // trained to the last rung
  std::vector<std::vector<std::uint64_t>> survivors;  // per rung
};

struct RunOptions {
  std::size_t n_reps = 15;
  std::uint64_t master_seed = 0;
  std::size_t jobs = 0;  // 0: evaluator default
};

inline Configuration sample_config(const SearchSpace& space, std::uint64_t master_seed, std::uint64_t config_id) {
  return sample(space, hash_words(master_seed, {tag_hash("hyperband"), config_id}));
}

inline bool all_failed(const TrialResult& r) { return !r.reps.empty() && r.failures == r.reps.size(); }

// Order positions by objective, best first; failures last, ties by position.
inline std::vector<std::size_t> rank(const std::vector<const TrialResult*>& results) {
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool fa = all_failed(*results[a]), fb = all_failed(*results[b]);
    if (fa != fb) return fb;
    return results[a]->objective > results[b]->objective;
  });
  return order;
}

inline BracketResult run_bracket(const BracketPlan& plan, const SearchSpace& space, const Evaluator& evaluator,
                                 const RunOptions& opt, std::uint64_t first_config_id, const Sink& sink = {}) {
  const std::size_t n = plan.n_configs;
  std::vector<Configuration> configs(n);
  for (std::size_t k = 0; k < n; ++k) configs[k] = sample_config(space, opt.master_seed, first_config_id + k);
  std::vector<std::vector<std::optional<nnet::Checkpoint>>> checkpoints(n);
  std::vector<TrialResult> latest(n);

  BracketResult out;
  std::vector<std::size_t> alive(n);
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  const std::size_t jobs = opt.jobs == 0 ? evaluator.jobs() : opt.jobs;

  for (std::size_t i = 0; i < plan.rungs.size(); ++i) {
    const auto& rung = plan.rungs[i];
    if (i > 0) {
      std::vector<const TrialResult*> prev;
      for (auto k : alive) prev.push_back(&latest[k]);
      const auto order = rank(prev);
      std::vector<std::size_t> next;
      for (std::size_t j = 0; j < std::min(rung.keep, order.size()); ++j) next.push_back(alive[order[j]]);
      std::sort(next.begin(), next.end());
      for (auto k : alive)
        if (!std::binary_search(next.begin(), next.end(), k)) checkpoints[k].clear();
      alive = std::move(next);
    }
    parallel_for(alive.size(), jobs, [&](std::size_t j) {
      const auto k = alive[j];
      latest[k] = evaluator.partial_evaluate(configs[k], rung.train_to, opt.n_reps, opt.master_seed,
                                             first_config_id + k, checkpoints[k], 1);
    });
    std::vector<std::uint64_t> ids;
    for (auto k : alive) {
      Evaluation e{plan.s, i, first_config_id + k, latest[k]};
      if (sink) sink(e);
      out.evaluations.push_back(std::move(e));
      ids.push_back(first_config_id + k);
    }
    out.survivors.push_back(std::move(ids));
  }
  out.finalists = out.survivors.back();
  return out;
}

struct HyperbandResult {
  std::vector<Evaluation> evaluations;
  std::vector<Evaluation> finalists;  // trained to epochs_max
  std::size_t configs_sampled = 0;
  std::size_t total_epochs = 0;  // replication-epochs, summed over configurations

  // Index into `finalists` of the best full-budget evaluation (ties: earliest).
  std::optional<std::size_t> best() const {
    std::optional<std::size_t> b;
    for (std::size_t i = 0; i < finalists.size(); ++i)
      if (!b || finalists[i].result.objective > finalists[*b].result.objective) b = i;
    return b;
  }
};

// One pass over brackets s_max..0, sampling at most `max_configs` configurations.
inline HyperbandResult run_hyperband(const HyperbandParams& params, const SearchSpace& space,
                                     const Evaluator& evaluator, const RunOptions& opt,
                                     std::uint64_t first_config_id = 0,
                                     std::size_t max_configs = std::numeric_limits<std::size_t>::max(),
                                     const Sink& sink = {}) {
  check_params(params);
  if (const auto* s = std::get_if<SurrogateTask>(&evaluator.objective().task); s && s->epochs_max != params.epochs_max)
    throw DomainError("surrogate fidelity budget must equal hyperband epochs_max");
  HyperbandResult out;
  for (std::size_t s = s_max(params) + 1; s-- > 0;) {
    const std::size_t remaining = max_configs - out.configs_sampled;
    if (remaining == 0) break;
    const auto plan = plan_bracket(params, s, remaining);
    auto br = run_bracket(plan, space, evaluator, opt, first_config_id + out.configs_sampled, sink);
    out.configs_sampled += plan.n_configs;
    out.total_epochs += plan.total_epochs * opt.n_reps;
    for (auto& e : br.evaluations) {
      if (e.result.epochs == params.epochs_max) out.finalists.push_back(e);
      out.evaluations.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace chainsearch::hyperband
