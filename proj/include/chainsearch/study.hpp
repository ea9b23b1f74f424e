#pragma once

// Study orchestration: strategy dispatch, JSONL trial log, final retest and
// report export.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "data_prep.hpp"
#include "errors.hpp"
#include "evaluator.hpp"
#include "hyperband.hpp"
#include "metrics.hpp"
#include "reinforce.hpp"
#include "rng.hpp"
#include "search_space.hpp"
#include "tpe.hpp"

namespace chainsearch {

enum class StrategyKind { Tpe, Hyperband, Reinforce, Random };

inline const char* to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::Tpe: return "tpe";
    case StrategyKind::Hyperband: return "hyperband";
    case StrategyKind::Reinforce: return "reinforce";
    case StrategyKind::Random: return "random";
  }
  return "?";
}

inline StrategyKind strategy_from_string(const std::string& s) {
  if (s == "tpe") return StrategyKind::Tpe;
  if (s == "hyperband") return StrategyKind::Hyperband;
  if (s == "reinforce") return StrategyKind::Reinforce;
  if (s == "random") return StrategyKind::Random;
  throw DomainError("unknown strategy '" + s + "' (expected tpe|hyperband|reinforce|random)");
}

struct DatasetRef {
  std::string bundle;                  // prepared bundle directory
  std::optional<SynthSpec> synthetic;  // or generate in memory
  std::size_t pca_k = 0;               // synthetic only; kPcaAuto for "auto"

  bool empty() const { return bundle.empty() && !synthetic; }
};

struct StudyConfig {
  StrategyKind strategy = StrategyKind::Tpe;
  ArchKind arch_kind = ArchKind::Surrogate;
  Metric metric = Metric::Auc;
  std::size_t n_trials = 300;
  std::size_t epochs = 80;
  std::size_t n_reps = 15;
  std::size_t retest_reps = 50;
  std::uint64_t master_seed = 0;
  std::size_t jobs = 0;  // 0: available cores
  std::string space_path;
  DatasetRef dataset;
  double surrogate_noise = kSurrogateNoise;
  tpe::TpeParams tpe;
  hyperband::HyperbandParams hyperband;  // epochs_max follows `epochs` unless set
  reinforce::ControllerParams reinforce;
};

// Epoch count of a full-budget trial.
inline std::size_t full_budget(const StudyConfig& c) {
  return c.strategy == StrategyKind::Hyperband ? c.hyperband.epochs_max : c.epochs;
}

inline void check_config(const StudyConfig& c) {
  if (c.n_trials < 1) throw DomainError("n_trials must be >= 1");
  if (c.epochs < 1) throw DomainError("epochs must be >= 1");
  if (c.n_reps < 1) throw DomainError("n_reps must be >= 1");
  if (c.retest_reps < 1) throw DomainError("retest_reps must be >= 1");
  if (!(c.surrogate_noise >= 0.0)) throw DomainError("surrogate noise must be >= 0");
  tpe::check_params(c.tpe);
  hyperband::check_params(c.hyperband);
  reinforce::check_params(c.reinforce);
  if (c.arch_kind != ArchKind::Surrogate && c.dataset.empty())
    throw DomainError("network study needs a dataset (bundle directory or synthetic spec)");
}

namespace detail {

inline std::string pca_to_string(std::size_t k) { return k == kPcaAuto ? "auto" : std::to_string(k); }

inline std::size_t pca_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "auto") return kPcaAuto;
    throw DomainError("pca_k must be an integer or \"auto\"");
  }
  return j.get<std::size_t>();
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw DomainError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline json to_json(const StudyConfig& c) {
  json ds = json::object();
  if (!c.dataset.bundle.empty()) ds["bundle"] = c.dataset.bundle;
  if (c.dataset.synthetic) {
    ds["synthetic"] = to_json(*c.dataset.synthetic);
    ds["pca_k"] = c.dataset.pca_k == kPcaAuto ? json("auto") : json(c.dataset.pca_k);
  }
  return json{{"strategy", to_string(c.strategy)},
              {"arch_kind", to_string(c.arch_kind)},
              {"metric", to_string(c.metric)},
              {"n_trials", c.n_trials},
              {"epochs", c.epochs},
              {"n_reps", c.n_reps},
              {"retest_reps", c.retest_reps},
              {"master_seed", c.master_seed},
              {"jobs", c.jobs},
              {"space", c.space_path},
              {"dataset", ds},
              {"surrogate_noise", c.surrogate_noise},
              {"tpe", {{"gamma", c.tpe.gamma}, {"n_init", c.tpe.n_init}, {"n_candidates", c.tpe.n_candidates}}},
              {"hyperband", {{"eta", c.hyperband.eta}, {"epochs_max", c.hyperband.epochs_max}}},
              {"reinforce",
               {{"hidden", c.reinforce.hidden},
                {"embedding", c.reinforce.embedding},
                {"learning_rate", c.reinforce.learning_rate},
                {"baseline_decay", c.reinforce.baseline_decay},
                {"entropy_weight", c.reinforce.entropy_weight},
                {"initial_baseline", c.reinforce.initial_baseline}}}};
}

inline StudyConfig study_config_from_json(const json& j) {
  try {
    detail::reject_unknown(j,
                           {"strategy", "arch_kind", "metric", "n_trials", "epochs", "n_reps", "retest_reps",
                            "master_seed", "jobs", "space", "dataset", "surrogate_noise", "tpe", "hyperband",
                            "reinforce"},
                           "study config");
    StudyConfig c;
    if (j.contains("strategy")) c.strategy = strategy_from_string(j["strategy"].get<std::string>());
    if (j.contains("arch_kind")) c.arch_kind = arch_kind_from_string(j["arch_kind"].get<std::string>());
    if (j.contains("metric")) c.metric = metric_from_string(j["metric"].get<std::string>());
    c.n_trials = j.value("n_trials", c.n_trials);
    c.epochs = j.value("epochs", c.epochs);
    c.n_reps = j.value("n_reps", c.n_reps);
    c.retest_reps = j.value("retest_reps", c.retest_reps);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.jobs = j.value("jobs", c.jobs);
    c.space_path = j.value("space", c.space_path);
    c.surrogate_noise = j.value("surrogate_noise", c.surrogate_noise);
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      detail::reject_unknown(d, {"bundle", "synthetic", "pca_k"}, "dataset");
      c.dataset.bundle = d.value("bundle", std::string{});
      if (d.contains("synthetic")) c.dataset.synthetic = synth_spec_from_json(d["synthetic"]);
      if (d.contains("pca_k")) c.dataset.pca_k = detail::pca_from_json(d["pca_k"]);
    }
    if (j.contains("tpe")) {
      const auto& t = j["tpe"];
      detail::reject_unknown(t, {"gamma", "n_init", "n_candidates"}, "tpe");
      c.tpe.gamma = t.value("gamma", c.tpe.gamma);
      c.tpe.n_init = t.value("n_init", c.tpe.n_init);
      c.tpe.n_candidates = t.value("n_candidates", c.tpe.n_candidates);
    }
    c.hyperband.epochs_max = c.epochs;
    if (j.contains("hyperband")) {
      const auto& h = j["hyperband"];
      detail::reject_unknown(h, {"eta", "epochs_max"}, "hyperband");
      c.hyperband.eta = h.value("eta", c.hyperband.eta);
      c.hyperband.epochs_max = h.value("epochs_max", c.hyperband.epochs_max);
    }
    if (j.contains("reinforce")) {
      const auto& r = j["reinforce"];
      detail::reject_unknown(
          r, {"hidden", "embedding", "learning_rate", "baseline_decay", "entropy_weight", "initial_baseline"},
          "reinforce");
      c.reinforce.hidden = r.value("hidden", c.reinforce.hidden);
      c.reinforce.embedding = r.value("embedding", c.reinforce.embedding);
      c.reinforce.learning_rate = r.value("learning_rate", c.reinforce.learning_rate);
      c.reinforce.baseline_decay = r.value("baseline_decay", c.reinforce.baseline_decay);
      c.reinforce.entropy_weight = r.value("entropy_weight", c.reinforce.entropy_weight);
      c.reinforce.initial_baseline = r.value("initial_baseline", c.reinforce.initial_baseline);
    }
    return c;
  } catch (const json::exception& e) {
    throw DomainError(std::string("malformed study config: ") + e.what());
  }
}

inline StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open study config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DomainError("cannot parse '" + path + "': " + e.what());
  }
  return study_config_from_json(j);
}

inline SearchSpace study_space(const StudyConfig& c) {
  if (c.space_path.empty()) return builtin_space(c.arch_kind);
  auto s = load_space(c.space_path);
  if (s.arch_kind != c.arch_kind)
    throw DomainError("search space '" + c.space_path + "' is for " + to_string(s.arch_kind) + ", study is " +
                      to_string(c.arch_kind));
  return s;
}

inline Objective make_objective(const StudyConfig& c) {
  Objective o;
  o.metric = c.metric;
  if (c.arch_kind == ArchKind::Surrogate) {
    o.task = SurrogateTask{c.surrogate_noise, full_budget(c)};
    return o;
  }
  std::shared_ptr<DatasetBundle> data;
  if (!c.dataset.bundle.empty()) {
    data = std::make_shared<DatasetBundle>(read_bundle(c.dataset.bundle));
  } else if (c.dataset.synthetic) {
    PrepOptions prep;
    prep.horizon = c.dataset.synthetic->horizon;
    prep.pca_k = c.dataset.pca_k;
    data = std::make_shared<DatasetBundle>(prepare_bundle(synth_dataset(*c.dataset.synthetic), prep));
  } else {
    throw DomainError("network study needs a dataset (bundle directory or synthetic spec)");
  }
  o.task = NetworkTask{c.arch_kind, std::move(data)};
  return o;
}

// --- log ---------------------------------------------------------------------

struct TrialRecord {
  std::size_t trial = 0;
  TrialResult result;
  double wall_ms = 0.0;
  json extra = json::object();  // strategy-specific fields (hyperband bracket/rung/config_id, ...)

  // Replication-seed key: the sampled configuration id under Hyperband.
  std::uint64_t seed_key() const {
    if (extra.contains("config_id")) return extra["config_id"].get<std::uint64_t>();
    return trial;
  }
};

struct RetestSummary {
  std::size_t trial = 0;
  Configuration config;
  std::size_t epochs = 0;
  std::vector<Replication> validation;
  std::vector<Replication> test;
  MetricReport validation_mean, validation_std, test_mean, test_std;
  std::size_t failures = 0;
};

struct StudyLog {
  StudyConfig config;
  SearchSpace space;
  std::vector<TrialRecord> trials;
  std::optional<RetestSummary> retest;

  // argmax objective over full-budget trials, ties to the earliest.
  std::optional<std::size_t> best_trial() const {
    std::optional<std::size_t> best;
    const auto budget = full_budget(config);
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (trials[i].result.epochs != budget) continue;
      if (!best || trials[i].result.objective > trials[*best].result.objective) best = i;
    }
    return best;
  }

  // Per-replication epochs actually trained, counting resumed rungs once.
  std::size_t total_epochs() const {
    std::map<std::uint64_t, std::size_t> last;
    std::size_t total = 0;
    for (const auto& t : trials) {
      if (t.extra.contains("config_id")) {
        auto& prev = last[t.seed_key()];
        total += t.result.epochs - std::min(prev, t.result.epochs);
        prev = t.result.epochs;
      } else {
        total += t.result.epochs;
      }
    }
    return total;
  }

  double full_training_equivalents() const {
    return static_cast<double>(total_epochs()) / static_cast<double>(full_budget(config));
  }
};

inline json to_json(const MetricReport& m) {
  return json{{"auc", m.auc}, {"bacc", m.bacc}, {"f1", m.f1}, {"acc", m.acc}};
}

inline MetricReport metric_report_from_json(const json& j) {
  return {j.at("auc").get<double>(), j.at("bacc").get<double>(), j.at("f1").get<double>(),
          j.at("acc").get<double>()};
}

inline json to_json(const Replication& r) {
  return json{{"seed", r.seed},          {"auc", r.metrics.auc}, {"bacc", r.metrics.bacc},
              {"f1", r.metrics.f1},      {"acc", r.metrics.acc}, {"status", r.status}};
}

inline Replication replication_from_json(const json& j) {
  return {j.at("seed").get<std::uint64_t>(), metric_report_from_json(j), j.at("status").get<std::string>()};
}

inline json to_json(const TrialRecord& t) {
  json reps = json::array();
  for (const auto& r : t.result.reps) reps.push_back(to_json(r));
  json j{{"trial", t.trial},
         {"config", to_json(t.result.config)},
         {"reps", reps},
         {"mean", to_json(t.result.mean)},
         {"std", to_json(t.result.std)},
         {"objective", t.result.objective},
         {"epochs", t.result.epochs},
         {"failures", t.result.failures},
         {"wall_ms", t.wall_ms}};
  for (const auto& [k, v] : t.extra.items()) j[k] = v;
  return j;
}

inline TrialRecord trial_from_json(const json& j, const SearchSpace& space, Metric metric) {
  static const char* kCore[] = {"trial", "config", "reps", "mean", "std", "objective", "epochs", "failures", "wall_ms"};
  TrialRecord t;
  t.trial = j.at("trial").get<std::size_t>();
  t.result.config = config_from_json(space, j.at("config"));
  for (const auto& r : j.at("reps")) t.result.reps.push_back(replication_from_json(r));
  t.result.mean = metric_report_from_json(j.at("mean"));
  t.result.std = metric_report_from_json(j.at("std"));
  t.result.objective = j.at("objective").get<double>();
  t.result.epochs = j.at("epochs").get<std::size_t>();
  t.result.failures = j.at("failures").get<std::size_t>();
  t.wall_ms = j.at("wall_ms").get<double>();
  for (const auto& [k, v] : j.items())
    if (std::find_if(std::begin(kCore), std::end(kCore), [&](const char* c) { return k == c; }) == std::end(kCore))
      t.extra[k] = v;
  if (!aggregates_consistent(t.result, metric))
    throw DomainError("trial " + std::to_string(t.trial) + ": stored mean/std do not match its replications");
  return t;
}

inline json to_json(const RetestSummary& r) {
  json val = json::array(), test = json::array();
  for (const auto& x : r.validation) val.push_back(to_json(x));
  for (const auto& x : r.test) test.push_back(to_json(x));
  return json{{"trial", r.trial},
              {"config", to_json(r.config)},
              {"epochs", r.epochs},
              {"reps", r.test.size()},
              {"failures", r.failures},
              {"validation", {{"mean", to_json(r.validation_mean)}, {"std", to_json(r.validation_std)}, {"reps", val}}},
              {"test", {{"mean", to_json(r.test_mean)}, {"std", to_json(r.test_std)}, {"reps", test}}}};
}

inline RetestSummary retest_from_json(const json& j, const SearchSpace& space) {
  RetestSummary r;
  r.trial = j.at("trial").get<std::size_t>();
  r.config = config_from_json(space, j.at("config"));
  r.epochs = j.at("epochs").get<std::size_t>();
  r.failures = j.at("failures").get<std::size_t>();
  for (const auto& x : j.at("validation").at("reps")) r.validation.push_back(replication_from_json(x));
  for (const auto& x : j.at("test").at("reps")) r.test.push_back(replication_from_json(x));
  r.validation_mean = metric_report_from_json(j["validation"]["mean"]);
  r.validation_std = metric_report_from_json(j["validation"]["std"]);
  r.test_mean = metric_report_from_json(j["test"]["mean"]);
  r.test_std = metric_report_from_json(j["test"]["std"]);
  return r;
}

inline json log_header(const StudyConfig& c) { return json{{"study", to_json(c)}}; }

// Parses a log; a truncated final line (interrupted write) is ignored.
inline StudyLog read_log(std::istream& in) {
  StudyLog log;
  std::string line;
  bool have_header = false;
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      if (i + 1 == lines.size()) break;
      throw DomainError("corrupt study log line " + std::to_string(i + 1));
    }
    try {
      if (!have_header) {
        if (!j.contains("study")) throw DomainError("study log has no header line");
        log.config = study_config_from_json(j["study"]);
        log.space = study_space(log.config);
        have_header = true;
      } else if (j.contains("retest")) {
        log.retest = retest_from_json(j["retest"], log.space);
      } else {
        auto t = trial_from_json(j, log.space, log.config.metric);
        if (t.trial != log.trials.size())
          throw DomainError("study log trial indices are not contiguous at line " + std::to_string(i + 1));
        log.trials.push_back(std::move(t));
      }
    } catch (const json::exception& e) {
      throw DomainError("malformed study log line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (!have_header) throw DomainError("study log is empty");
  return log;
}

inline StudyLog read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open study log '" + path + "'");
  return read_log(in);
}

inline void write_log(std::ostream& out, const StudyLog& log) {
  out << log_header(log.config).dump() << '\n';
  for (const auto& t : log.trials) out << to_json(t).dump() << '\n';
  if (log.retest) out << json{{"retest", to_json(*log.retest)}}.dump() << '\n';
}

// --- strategies --------------------------------------------------------------

namespace detail {

class Sequential {
public:
  virtual ~Sequential() = default;
  virtual Configuration propose(std::size_t trial) = 0;
  virtual json observe(std::size_t trial, const TrialResult& result) = 0;
};

class RandomSearch final : public Sequential {
public:
  RandomSearch(const SearchSpace& space, std::uint64_t master) : space_(space), master_(master) {}
  Configuration propose(std::size_t t) override {
    return sample(space_, hash_words(master_, {tag_hash("random"), t}));
  }
  json observe(std::size_t, const TrialResult&) override { return json::object(); }

private:
  const SearchSpace& space_;
  std::uint64_t master_;
};

class TpeSearch final : public Sequential {
public:
  TpeSearch(const SearchSpace& space, const tpe::TpeParams& p, std::uint64_t master)
      : space_(space), params_(p), master_(master) {}
  Configuration propose(std::size_t t) override {
    return tpe::suggest(history_, space_, params_, hash_words(master_, {tag_hash("tpe"), t}));
  }
  json observe(std::size_t, const TrialResult& r) override {
    history_.push_back({r.config, r.objective});
    return json::object();
  }

private:
  const SearchSpace& space_;
  tpe::TpeParams params_;
  std::uint64_t master_;
  std::vector<tpe::Observation> history_;
};

class ReinforceSearch final : public Sequential {
public:
  ReinforceSearch(const SearchSpace& space, const reinforce::ControllerParams& p, std::uint64_t master)
      : space_(space),
        master_(master),
        state_(reinforce::init_controller(space, p, hash_combine(master, tag_hash("controller")))) {}
  Configuration propose(std::size_t t) override {
    episode_ = reinforce::controller_sample(state_, space_, hash_words(master_, {tag_hash("reinforce"), t}));
    return episode_.config;
  }
  json observe(std::size_t, const TrialResult& r) override {
    const auto u = reinforce::controller_update(state_, episode_, r.objective);
    return json{{"controller_update", reinforce::to_string(u.status)}};
  }

private:
  const SearchSpace& space_;
  std::uint64_t master_;
  reinforce::ControllerState state_;
  reinforce::Episode episode_;
};

inline std::unique_ptr<Sequential> make_sequential(const StudyConfig& c, const SearchSpace& space) {
  switch (c.strategy) {
    case StrategyKind::Random: return std::make_unique<RandomSearch>(space, c.master_seed);
    case StrategyKind::Tpe: return std::make_unique<TpeSearch>(space, c.tpe, c.master_seed);
    case StrategyKind::Reinforce: return std::make_unique<ReinforceSearch>(space, c.reinforce, c.master_seed);
    default: throw DomainError("strategy is not sequential");
  }
}

class LogWriter {
public:
  explicit LogWriter(std::string path) : path_(std::move(path)) {}

  void reset(const StudyLog& log) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw DomainError("cannot write study log '" + path_ + "'");
    write_log(out, log);
  }
  void append(const json& line) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw DomainError("cannot append to study log '" + path_ + "'");
    out << line.dump() << '\n';
    out.flush();
  }

private:
  std::string path_;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace detail

// Runs a study, appending each trial to `log_path` (when non-empty) as it
// completes. An existing log for the same config is resumed: sequential
// strategies replay logged trials and continue, Hyperband restarts.
inline StudyLog run_study(const StudyConfig& config, const std::string& log_path = {}) {
  check_config(config);
  StudyLog log;
  log.config = config;
  log.space = study_space(config);
  const Evaluator evaluator(make_objective(config), config.jobs == 0 ? default_jobs() : config.jobs);

  std::vector<TrialRecord> prior;
  if (!log_path.empty() && std::filesystem::exists(log_path) && std::filesystem::file_size(log_path) > 0) {
    auto existing = read_log(log_path);
    auto same_jobs = existing.config;
    same_jobs.jobs = config.jobs;
    if (to_json(same_jobs) != to_json(config))
      throw DomainError("existing log '" + log_path + "' was written for a different study config");
    if (config.strategy != StrategyKind::Hyperband) prior = std::move(existing.trials);
  }
  detail::LogWriter writer(log_path);
  writer.reset(log);

  auto emit = [&](TrialRecord rec) {
    writer.append(to_json(rec));
    log.trials.push_back(std::move(rec));
  };

  if (config.strategy == StrategyKind::Hyperband) {
    std::size_t sampled = 0, pass = 0;
    auto clock = std::chrono::steady_clock::now();
    hyperband::RunOptions opt{config.n_reps, config.master_seed, evaluator.jobs()};
    while (sampled < config.n_trials) {
      auto sink = [&](const hyperband::Evaluation& e) {
        TrialRecord rec;
        rec.trial = log.trials.size();
        rec.result = e.result;
        rec.wall_ms = detail::elapsed_ms(clock);
        rec.extra = json{{"bracket", e.bracket}, {"rung", e.rung}, {"config_id", e.config_id}, {"pass", pass}};
        emit(std::move(rec));
        clock = std::chrono::steady_clock::now();
      };
      const auto r = hyperband::run_hyperband(config.hyperband, log.space, evaluator, opt, sampled,
                                              config.n_trials - sampled, sink);
      sampled += r.configs_sampled;
      ++pass;
    }
    return log;
  }

  auto strategy = detail::make_sequential(config, log.space);
  for (std::size_t t = 0; t < config.n_trials; ++t) {
    const auto clock = std::chrono::steady_clock::now();
    const auto proposal = strategy->propose(t);
    if (t < prior.size()) {
      if (!(proposal == prior[t].result.config))
        throw DomainError("existing log diverges from the strategy at trial " + std::to_string(t));
      strategy->observe(t, prior[t].result);
      emit(std::move(prior[t]));
      continue;
    }
    TrialRecord rec;
    rec.trial = t;
    rec.result = evaluator.evaluate_trial(proposal, config.epochs, config.n_reps, config.master_seed, t);
    rec.extra = strategy->observe(t, rec.result);
    rec.wall_ms = detail::elapsed_ms(clock);
    emit(std::move(rec));
  }
  return log;
}

// Retrains the best configuration with seeds from the retest domain and
// scores both validation and test splits.
inline RetestSummary final_retest(const StudyLog& log, const Evaluator& evaluator, std::size_t retest_reps,
                                  std::size_t jobs = 0) {
  if (retest_reps < 1) throw DomainError("retest_reps must be >= 1");
  const auto best = log.best_trial();
  if (!best) throw DomainError("study log has no full-budget trial to retest");
  if (const auto* t = std::get_if<NetworkTask>(&evaluator.objective().task); t && t->data && t->data->test.rows() == 0)
    throw DomainError("dataset has no test split");
  const auto& rec = log.trials[*best];
  RetestSummary r;
  r.trial = *best;
  r.config = rec.result.config;
  r.epochs = rec.result.epochs;
  std::vector<std::uint64_t> seeds(retest_reps);
  for (std::size_t i = 0; i < retest_reps; ++i)
    seeds[i] = replication_seed(log.config.master_seed, kRetestDomain, rec.seed_key(), i);
  const SplitKind splits[] = {SplitKind::Validation, SplitKind::Test};
  const auto outcomes = evaluator.run(r.config, r.epochs, seeds, splits, nullptr, false, jobs);
  TrialResult val, test;
  for (std::size_t i = 0; i < retest_reps; ++i) {
    val.reps.push_back({seeds[i], outcomes[i].per_split[0], outcomes[i].status});
    test.reps.push_back({seeds[i], outcomes[i].per_split[1], outcomes[i].status});
  }
  aggregate(val, log.config.metric);
  aggregate(test, log.config.metric);
  r.validation = val.reps;
  r.test = test.reps;
  r.validation_mean = val.mean;
  r.validation_std = val.std;
  r.test_mean = test.mean;
  r.test_std = test.std;
  r.failures = test.failures;
  return r;
}

inline RetestSummary final_retest(const StudyLog& log, std::size_t retest_reps, std::size_t jobs = 0) {
  const Evaluator evaluator(make_objective(log.config), jobs == 0 ? default_jobs() : jobs);
  return final_retest(log, evaluator, retest_reps, jobs);
}

inline void append_retest(const std::string& log_path, const RetestSummary& r) {
  detail::LogWriter(log_path).append(json{{"retest", to_json(r)}});
}

// --- reports -----------------------------------------------------------------

inline void write_history_csv(std::ostream& out, const StudyLog& log) {
  out << "trial_index,mean_objective,best_so_far\n";
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : log.trials) {
    best = std::max(best, t.result.objective);
    out << t.trial << ',' << format_number(t.result.objective) << ',' << format_number(best) << '\n';
  }
}

inline void write_slices_csv(std::ostream& out, const StudyLog& log) {
  out << "trial_index,param,value,mean_objective\n";
  for (const auto& t : log.trials)
    for (const auto& p : log.space.params)
      out << t.trial << ',' << p.name << ',' << value_to_string(t.result.config.at(p.name)) << ','
          << format_number(t.result.objective) << '\n';
}

inline json summary_json(const StudyLog& log) {
  json s{{"strategy", to_string(log.config.strategy)},
         {"arch_kind", to_string(log.config.arch_kind)},
         {"metric", to_string(log.config.metric)},
         {"n_records", log.trials.size()},
         {"total_epochs", log.total_epochs()},
         {"full_training_equivalents", log.full_training_equivalents()}};
  if (const auto b = log.best_trial()) {
    const auto& t = log.trials[*b];
    s["best_trial"] = *b;
    s["best_config"] = to_json(t.result.config);
    s["best_objective"] = t.result.objective;
    s["best_mean"] = to_json(t.result.mean);
    s["best_std"] = to_json(t.result.std);
  } else {
    s["best_trial"] = nullptr;
  }
  if (log.retest) {
    const auto& r = *log.retest;
    s["retest"] = {{"trial", r.trial},
                   {"reps", r.test.size()},
                   {"failures", r.failures},
                   {"validation_mean", to_json(r.validation_mean)},
                   {"validation_std", to_json(r.validation_std)},
                   {"test_mean", to_json(r.test_mean)},
                   {"test_std", to_json(r.test_std)}};
  } else {
    s["retest"] = nullptr;
  }
  return s;
}

inline void export_reports(const StudyLog& log, const std::filesystem::path& dir) {
  if (log.trials.empty()) throw DomainError("study log has no trials to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw DomainError("cannot write '" + (dir / name).string() + "'");
    return out;
  };
  {
    auto out = open("history.csv");
    write_history_csv(out, log);
  }
  {
    auto out = open("slices.csv");
    write_slices_csv(out, log);
  }
  {
    auto out = open("summary.json");
    out << summary_json(log).dump(2) << '\n';
  }
}

}  // namespace chainsearch
