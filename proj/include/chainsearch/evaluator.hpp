#pragma once

// Seed-replicated trial evaluation plus the analytic surrogate objective.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "data_prep.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "nnet.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "search_space.hpp"

namespace chainsearch {

inline constexpr std::string_view kSearchDomain = "search";
inline constexpr std::string_view kRetestDomain = "retest";

inline constexpr double kSurrogateNoise = 0.03;
inline constexpr double kSurrogateOptimum = 0.72;

struct SurrogateTask {
  double noise_amplitude = kSurrogateNoise;  // at the full budget
  std::size_t epochs_max = 80;               // budget at which noise == noise_amplitude
};

struct NetworkTask {
  ArchKind arch = ArchKind::Mlp;
  std::shared_ptr<const DatasetBundle> data;
};

struct Objective {
  std::variant<SurrogateTask, NetworkTask> task;
  Metric metric = Metric::Auc;

  bool is_surrogate() const { return std::holds_alternative<SurrogateTask>(task); }
};

struct Replication {
  std::uint64_t seed = 0;
  MetricReport metrics;
  std::string status = "ok";  // ok | invalid_architecture | diverged | undefined_metric | insufficient_data

  bool ok() const { return status == "ok"; }
  bool operator==(const Replication&) const = default;
};

struct TrialResult {
  Configuration config;
  std::vector<Replication> reps;
  MetricReport mean;
  MetricReport std;
  std::size_t epochs = 0;
  std::size_t failures = 0;
  double objective = 0.0;  // mean of the objective metric; 0 if every replication failed

  bool operator==(const TrialResult&) const = default;
};

// Mean and sample std over successful replications, summed in index order.
// Sums are shifted by the first successful value, so identical replications
// give exactly that value and a zero std.
inline void aggregate(TrialResult& r, Metric metric) {
  auto fields = [](MetricReport& m) { return std::array<double*, 4>{&m.auc, &m.bacc, &m.f1, &m.acc}; };
  const Replication* first = nullptr;
  std::size_t n = 0;
  for (const auto& rep : r.reps)
    if (rep.ok()) {
      if (!first) first = &rep;
      ++n;
    }
  r.failures = r.reps.size() - n;
  r.mean = r.std = MetricReport{};
  if (n == 0) {
    r.objective = 0.0;
    return;
  }
  MetricReport shift = first->metrics, sum{}, sq{};
  const auto sh = fields(shift);
  const auto su = fields(sum);
  const auto mu = fields(r.mean);
  const auto dq = fields(sq);
  const auto sd = fields(r.std);
  for (auto& rep : r.reps) {
    if (!rep.ok()) continue;
    const auto x = fields(rep.metrics);
    for (std::size_t k = 0; k < 4; ++k) *su[k] += *x[k] - *sh[k];
  }
  const double dn = static_cast<double>(n);
  for (std::size_t k = 0; k < 4; ++k) *mu[k] = *sh[k] + *su[k] / dn;
  if (n > 1) {
    for (auto& rep : r.reps) {
      if (!rep.ok()) continue;
      const auto x = fields(rep.metrics);
      for (std::size_t k = 0; k < 4; ++k) *dq[k] += (*x[k] - *mu[k]) * (*x[k] - *mu[k]);
    }
    for (std::size_t k = 0; k < 4; ++k) *sd[k] = std::sqrt(*dq[k] / (dn - 1.0));
  }
  r.objective = metric_value(r.mean, metric);
}

inline bool aggregates_consistent(const TrialResult& r, Metric metric) {
  TrialResult copy = r;
  aggregate(copy, metric);
  return copy.mean == r.mean && copy.std == r.std && copy.objective == r.objective && copy.failures == r.failures;
}

// --- surrogate ------------------------------------------------------------------

inline double surrogate_amplitude(const SurrogateTask& task, std::size_t epochs) {
  if (epochs == 0) throw DomainError("epochs must be >= 1");
  return task.noise_amplitude * std::sqrt(static_cast<double>(task.epochs_max) / static_cast<double>(epochs));
}

inline double surrogate_clean_auc(double x1, double x2, const std::string& c) {
  double bonus = 0.0;
  if (c == "a") bonus = 0.02;
  else if (c == "b") bonus = 0.0;
  else if (c == "c") bonus = -0.02;
  else if (c == "d") bonus = 0.01;
  else throw DomainError("surrogate category must be one of a,b,c,d");
  const double l = std::log10(x2) + 2.0;
  return 0.5 + 0.12 * std::exp(-8.0 * (x1 - 0.3) * (x1 - 0.3)) + 0.08 * std::exp(-l * l) + bonus;
}

inline double surrogate_clean_auc(const Configuration& config) {
  return surrogate_clean_auc(config.get_double("x1"), config.get_double("x2"), config.get_choice("c"));
}

inline MetricReport surrogate_report(double auc) {
  const double bacc = 0.5 + 0.8 * (auc - 0.5);
  return {auc, bacc, auc, bacc};
}

// Zero-mean noise uniform in [-amplitude, amplitude], keyed by the
// configuration's grid tokens and the seed.
inline MetricReport surrogate_objective(const Configuration& config, std::uint64_t seed,
                                        double amplitude = kSurrogateNoise) {
  static const SearchSpace space = builtin_space(ArchKind::Surrogate);
  if (config.space_id != space.id()) throw DomainError("configuration is not from the surrogate space");
  const auto tokens = encode(space, config);
  std::uint64_t h = hash_combine(seed, tag_hash("surrogate-noise"));
  for (auto t : tokens) h = hash_combine(h, t);
  Rng rng(h);
  const double nu = amplitude * (2.0 * rng.uniform() - 1.0);
  return surrogate_report(std::clamp(surrogate_clean_auc(config) + nu, 0.0, 1.0));
}

// --- network trials -------------------------------------------------------------

namespace detail {

struct PreparedData {
  nnet::ModelSpec spec;
  WindowSet train, validation, test;
};

inline void check_task(const NetworkTask& task, const Configuration& config) {
  if (!task.data) throw DomainError("network objective has no dataset");
  if (arch_kind_from_string(config.space_id) != task.arch)
    throw DomainError("configuration space '" + config.space_id + "' does not match objective arch '" +
                      to_string(task.arch) + "'");
}

inline PreparedData prepare_network(const NetworkTask& task, const Configuration& config) {
  PreparedData p;
  p.spec = nnet::build_model(config, {task.data->n_features()});
  const auto L = p.spec.chunk_length;
  auto windows = [&](const Split& s) { return make_windows(s.features, s.labels, L); };
  p.train = windows(task.data->train);
  p.validation = windows(task.data->validation);
  p.test = windows(task.data->test);
  return p;
}

inline std::string failure_status(const std::exception& e) {
  if (dynamic_cast<const InvalidArchitectureError*>(&e)) return "invalid_architecture";
  if (dynamic_cast<const TrainingDivergedError*>(&e)) return "diverged";
  if (dynamic_cast<const UndefinedMetricError*>(&e)) return "undefined_metric";
  return "insufficient_data";
}

inline MetricReport score(const nnet::Checkpoint& ck, const WindowSet& w) {
  const auto scores = nnet::predict(ck, w);
  return evaluate_scores(ScoredLabels(scores, w.labels));
}

}  // namespace detail

// One training run per replication, scored on every requested split.
struct ReplicationOutcome {
  std::string status = "ok";
  std::vector<MetricReport> per_split;
  std::optional<nnet::Checkpoint> checkpoint;
};

class Evaluator {
public:
  explicit Evaluator(Objective objective, std::size_t jobs = default_jobs())
      : objective_(std::move(objective)), jobs_(jobs == 0 ? 1 : jobs) {}

  const Objective& objective() const noexcept { return objective_; }
  std::size_t jobs() const noexcept { return jobs_; }

  // Trains `seeds.size()` replications to `epochs` (resuming from `resume`
  // when given) and scores each on `splits`.
  std::vector<ReplicationOutcome> run(const Configuration& config, std::size_t epochs,
                                      std::span<const std::uint64_t> seeds, std::span<const SplitKind> splits,
                                      std::vector<std::optional<nnet::Checkpoint>>* resume = nullptr,
                                      bool keep_checkpoints = false, std::size_t jobs = 0) const {
    if (epochs < 1) throw DomainError("epochs must be >= 1");
    if (jobs == 0) jobs = jobs_;
    std::vector<ReplicationOutcome> out(seeds.size());
    if (const auto* s = std::get_if<SurrogateTask>(&objective_.task)) {
      const double amp = surrogate_amplitude(*s, epochs);
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto m = surrogate_objective(config, seeds[i], amp);
        out[i].per_split.assign(splits.size(), m);
      }
      return out;
    }
    const auto& task = std::get<NetworkTask>(objective_.task);
    detail::check_task(task, config);
    std::optional<detail::PreparedData> data;
    std::string setup_failure;
    try {
      data = detail::prepare_network(task, config);
    } catch (const DomainError& e) {
      setup_failure = detail::failure_status(e);
    }
    if (!data) {
      for (auto& o : out) {
        o.status = setup_failure;
        o.per_split.assign(splits.size(), MetricReport{});
      }
      return out;
    }
    if (resume && resume->size() != seeds.size()) throw DomainError("checkpoint count does not match replications");
    parallel_for(seeds.size(), jobs, [&](std::size_t i) {
      auto& o = out[i];
      o.per_split.assign(splits.size(), MetricReport{});
      try {
        nnet::Checkpoint ck;
        const std::optional<nnet::Checkpoint>* prior = resume ? &(*resume)[i] : nullptr;
        if (prior && prior->has_value()) {
          const auto& p = **prior;
          if (!(p.spec == data->spec) || p.seed != seeds[i])
            throw CheckpointError("checkpoint does not belong to this configuration/replication");
          if (p.epochs_completed > epochs) throw CheckpointError("checkpoint already past the requested budget");
          ck = nnet::resume(p, data->train, epochs - p.epochs_completed);
        } else {
          ck = nnet::train(data->spec, data->train, epochs, seeds[i]);
        }
        for (std::size_t s = 0; s < splits.size(); ++s) {
          const auto& w = splits[s] == SplitKind::Train        ? data->train
                          : splits[s] == SplitKind::Validation ? data->validation
                                                               : data->test;
          o.per_split[s] = detail::score(ck, w);
        }
        if (keep_checkpoints) o.checkpoint = std::move(ck);
      } catch (const CheckpointError&) {
        throw;
      } catch (const DomainError& e) {
        o.status = detail::failure_status(e);
        o.per_split.assign(splits.size(), MetricReport{});
      }
    });
    return out;
  }

  TrialResult evaluate_trial(const Configuration& config, std::size_t epochs, std::size_t n_reps,
                             std::uint64_t master_seed, std::uint64_t trial_key,
                             std::string_view domain = kSearchDomain, std::size_t jobs = 0) const {
    std::vector<std::optional<nnet::Checkpoint>>* none = nullptr;
    return partial(config, epochs, n_reps, master_seed, trial_key, domain, none, jobs);
  }

  // Like evaluate_trial, but resumes each replication from `checkpoints`
  // (empty slots train from scratch) and stores the new checkpoints back.
  // Replication seeds depend only on (master_seed, trial_key, i), so a
  // configuration keeps its identity across successive-halving rungs.
  TrialResult partial_evaluate(const Configuration& config, std::size_t epochs, std::size_t n_reps,
                               std::uint64_t master_seed, std::uint64_t trial_key,
                               std::vector<std::optional<nnet::Checkpoint>>& checkpoints,
                               std::size_t jobs = 0) const {
    if (checkpoints.empty()) checkpoints.resize(n_reps);
    auto* p = &checkpoints;
    return partial(config, epochs, n_reps, master_seed, trial_key, kSearchDomain, p, jobs);
  }

private:
  TrialResult partial(const Configuration& config, std::size_t epochs, std::size_t n_reps, std::uint64_t master_seed,
                      std::uint64_t trial_key, std::string_view domain,
                      std::vector<std::optional<nnet::Checkpoint>>* checkpoints, std::size_t jobs) const {
    if (n_reps < 1) throw DomainError("n_reps must be >= 1");
    std::vector<std::uint64_t> seeds(n_reps);
    for (std::size_t i = 0; i < n_reps; ++i) seeds[i] = replication_seed(master_seed, domain, trial_key, i);
    const SplitKind split[] = {SplitKind::Validation};
    auto outcomes = run(config, epochs, seeds, split, checkpoints, checkpoints != nullptr, jobs);
    TrialResult r;
    r.config = config;
    r.epochs = epochs;
    for (std::size_t i = 0; i < n_reps; ++i) {
      r.reps.push_back({seeds[i], outcomes[i].per_split[0], outcomes[i].status});
      if (checkpoints) (*checkpoints)[i] = std::move(outcomes[i].checkpoint);
    }
    aggregate(r, objective_.metric);
    return r;
  }

  Objective objective_;
  std::size_t jobs_;
};

inline TrialResult evaluate_trial(const Objective& objective, const Configuration& config, std::size_t epochs,
                                  std::size_t n_reps, std::uint64_t master_seed, std::uint64_t trial_index,
                                  std::size_t jobs = default_jobs()) {
  return Evaluator(objective, jobs).evaluate_trial(config, epochs, n_reps, master_seed, trial_index);
}

}  // namespace chainsearch
