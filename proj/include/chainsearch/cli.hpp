#pragma once

// `chainsearch` command line: prep | study | retest | report | bench.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "bench.hpp"
#include "data_prep.hpp"
#include "errors.hpp"
#include "study.hpp"

namespace chainsearch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

inline std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("CHAINSEARCH_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used, 0);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw DomainError(std::string("CHAINSEARCH_SEED is not an unsigned integer: '") + v + "'");
  }
}

inline std::size_t parse_pca_k(const std::string& s) {
  if (s == "auto") return kPcaAuto;
  try {
    std::size_t used = 0;
    const auto k = std::stoul(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return k;
  } catch (const std::exception&) {
    throw DomainError("--pca-k must be an integer or 'auto', got '" + s + "'");
  }
}

struct PrepArgs {
  std::string input, target, drop_manifest, synthetic, out;
  std::size_t horizon = 5;
  std::string pca_k = "0";
};

struct StudyArgs {
  std::string config, out;
  std::optional<std::string> strategy, arch, metric, space, bundle;
  std::optional<std::size_t> n_trials, epochs, reps, retest_reps, jobs;
  std::optional<std::uint64_t> seed;
  std::optional<double> tpe_gamma;
  std::optional<std::size_t> tpe_ninit, tpe_candidates;
  std::optional<std::size_t> hb_eta, epochs_max;
  std::optional<std::size_t> rl_hidden;
  std::optional<double> rl_lr, rl_baseline_decay, rl_entropy, surrogate_noise;
  bool retest = false;
};

struct RetestArgs {
  std::string study;
  std::optional<std::size_t> reps;
  std::size_t jobs = 0;
};

struct ReportArgs {
  std::string study, out;
};

inline StudyConfig resolve_study(const StudyArgs& a) {
  StudyConfig c;
  bool seed_set = false;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw DomainError("cannot open study config '" + a.config + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DomainError("cannot parse '" + a.config + "': " + e.what());
    }
    c = study_config_from_json(j);
    seed_set = j.contains("master_seed");
  } else {
    c.hyperband.epochs_max = c.epochs;
  }
  if (a.strategy) c.strategy = strategy_from_string(*a.strategy);
  if (a.arch) c.arch_kind = arch_kind_from_string(*a.arch);
  if (a.metric) c.metric = metric_from_string(*a.metric);
  if (a.space) c.space_path = *a.space;
  if (a.bundle) {
    c.dataset.bundle = *a.bundle;
    c.dataset.synthetic.reset();
  }
  if (a.n_trials) c.n_trials = *a.n_trials;
  if (a.epochs) {
    if (c.hyperband.epochs_max == c.epochs) c.hyperband.epochs_max = *a.epochs;
    c.epochs = *a.epochs;
  }
  if (a.reps) c.n_reps = *a.reps;
  if (a.retest_reps) c.retest_reps = *a.retest_reps;
  if (a.jobs) c.jobs = *a.jobs;
  if (a.seed) c.master_seed = *a.seed;
  else if (!seed_set)
    if (auto s = env_seed()) c.master_seed = *s;
  if (a.tpe_gamma) c.tpe.gamma = *a.tpe_gamma;
  if (a.tpe_ninit) c.tpe.n_init = *a.tpe_ninit;
  if (a.tpe_candidates) c.tpe.n_candidates = *a.tpe_candidates;
  if (a.hb_eta) c.hyperband.eta = *a.hb_eta;
  if (a.epochs_max) c.hyperband.epochs_max = *a.epochs_max;
  if (a.rl_hidden) c.reinforce.hidden = *a.rl_hidden;
  if (a.rl_lr) c.reinforce.learning_rate = *a.rl_lr;
  if (a.rl_baseline_decay) c.reinforce.baseline_decay = *a.rl_baseline_decay;
  if (a.rl_entropy) c.reinforce.entropy_weight = *a.rl_entropy;
  if (a.surrogate_noise) c.surrogate_noise = *a.surrogate_noise;
  check_config(c);
  return c;
}

inline int cmd_prep(const PrepArgs& a, std::ostream& out) {
  if (a.input.empty() == a.synthetic.empty()) throw DomainError("prep needs exactly one of --input or --synthetic");
  PrepOptions opt;
  opt.horizon = a.horizon;
  opt.pca_k = parse_pca_k(a.pca_k);
  if (!a.drop_manifest.empty()) opt.drop_manifest = load_manifest(a.drop_manifest);
  json resolved{{"command", "prep"},
                {"horizon", opt.horizon},
                {"pca_k", a.pca_k},
                {"drop_manifest", a.drop_manifest},
                {"out", a.out}};
  RawTable table;
  if (!a.input.empty()) {
    if (a.target.empty()) throw DomainError("prep --input needs --target");
    resolved["input"] = a.input;
    resolved["target"] = a.target;
    out << resolved.dump() << '\n';
    table = read_csv(a.input, a.target);
  } else {
    std::ifstream in(a.synthetic);
    if (!in) throw DomainError("cannot open synthetic spec '" + a.synthetic + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DomainError("cannot parse '" + a.synthetic + "': " + e.what());
    }
    const auto spec = synth_spec_from_json(j);
    resolved["synthetic"] = to_json(spec);
    out << resolved.dump() << '\n';
    table = synth_dataset(spec);
  }
  const auto bundle = prepare_bundle(table, opt);
  write_bundle(a.out, bundle);
  out << json{{"train", bundle.train.rows()},
              {"validation", bundle.validation.rows()},
              {"test", bundle.test.rows()},
              {"features", bundle.n_features()}}
             .dump()
      << '\n';
  return kExitOk;
}

inline int cmd_study(const StudyArgs& a, std::ostream& out) {
  const auto c = resolve_study(a);
  out << json{{"command", "study"}, {"config", to_json(c)}, {"out", a.out}}.dump() << '\n';
  auto log = run_study(c, a.out);
  const auto best = log.best_trial();
  json summary{{"records", log.trials.size()}, {"best_trial", nullptr}};
  if (best) {
    summary["best_trial"] = *best;
    summary["best_objective"] = log.trials[*best].result.objective;
    summary["best_config"] = to_json(log.trials[*best].result.config);
  }
  if (a.retest && best) {
    const auto r = final_retest(log, c.retest_reps, c.jobs);
    append_retest(a.out, r);
    summary["retest"] = summary_json(StudyLog{c, log.space, {}, r})["retest"];
  }
  out << summary.dump() << '\n';
  return kExitOk;
}

inline int cmd_retest(const RetestArgs& a, std::ostream& out) {
  const auto log = read_log(a.study);
  const auto reps = a.reps.value_or(log.config.retest_reps);
  out << json{{"command", "retest"}, {"study", a.study}, {"reps", reps}, {"jobs", a.jobs}}.dump() << '\n';
  const auto r = final_retest(log, reps, a.jobs);
  append_retest(a.study, r);
  StudyLog view{log.config, log.space, {}, r};
  out << summary_json(view)["retest"].dump() << '\n';
  return kExitOk;
}

inline int cmd_report(const ReportArgs& a, std::ostream& out) {
  out << json{{"command", "report"}, {"study", a.study}, {"out", a.out}}.dump() << '\n';
  const auto log = read_log(a.study);
  export_reports(log, a.out);
  out << summary_json(log).dump() << '\n';
  return kExitOk;
}

inline int cmd_bench(bench::BenchOptions o, bool seed_given, std::ostream& out) {
  if (!seed_given)
    if (auto s = env_seed()) o.seed = *s;
  out << json{{"command", "bench"},
              {"studies", o.studies},
              {"n_trials", o.n_trials},
              {"n_reps", o.n_reps},
              {"epochs", o.epochs},
              {"seed", o.seed},
              {"jobs", o.jobs}}
             .dump()
      << '\n';
  const auto r = bench::run_bench(o);
  for (const auto& [name, v] : r.best) {
    out << name << " best:";
    for (double x : v) out << ' ' << format_number(x);
    out << '\n';
  }
  for (const auto& c : r.checks)
    out << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ')' << (c.gating ? "" : " [info]") << '\n';
  return r.passed() ? kExitOk : kExitDomain;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Neural architecture search over chain-structured networks", "chainsearch"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  PrepArgs prep;
  auto* p = app.add_subcommand("prep", "Prepare a dataset bundle from CSV or the synthetic generator");
  p->add_option("--input", prep.input, "Input CSV (date column first)");
  p->add_option("--target", prep.target, "Target column name");
  p->add_option("--synthetic", prep.synthetic, "Synthetic generator spec (JSON) instead of --input");
  p->add_option("--horizon", prep.horizon, "Prediction horizon in rows")->capture_default_str();
  p->add_option("--drop-manifest", prep.drop_manifest, "JSON list of feature names to drop");
  p->add_option("--pca-k", prep.pca_k, "PCA components: 0 (off), K, or auto")->capture_default_str();
  p->add_option("--out", prep.out, "Output bundle directory")->required();

  StudyArgs st;
  const StudyConfig d;
  auto* s = app.add_subcommand("study", "Run a search study");
  s->add_option("--config", st.config, "Study config JSON");
  s->add_option("--out", st.out, "Study log (JSONL)")->required();
  s->add_option("--strategy", st.strategy, "tpe|hyperband|reinforce|random")->default_str(to_string(d.strategy));
  s->add_option("--arch", st.arch, "mlp|cnn1d|lstm|surrogate")->default_str(to_string(d.arch_kind));
  s->add_option("--metric", st.metric, "auc|bacc|f1")->default_str(to_string(d.metric));
  s->add_option("--space", st.space, "Search space JSON (default: built-in space for --arch)");
  s->add_option("--bundle", st.bundle, "Prepared dataset bundle directory");
  s->add_option("--n-trials", st.n_trials, "Trial budget")->default_str(std::to_string(d.n_trials));
  s->add_option("--epochs", st.epochs, "Training epochs per trial")->default_str(std::to_string(d.epochs));
  s->add_option("--reps", st.reps, "Seed replications per trial")->default_str(std::to_string(d.n_reps));
  s->add_option("--retest-reps", st.retest_reps, "Replications for the final retest")
      ->default_str(std::to_string(d.retest_reps));
  s->add_option("--seed", st.seed, "Master seed (fallback: CHAINSEARCH_SEED)")
      ->default_str(std::to_string(d.master_seed));
  s->add_option("--jobs", st.jobs, "Parallel evaluations (0: available cores)")->default_str("0");
  s->add_option("--tpe-gamma", st.tpe_gamma, "TPE good fraction")->default_str(format_number(d.tpe.gamma));
  s->add_option("--tpe-ninit", st.tpe_ninit, "TPE initial random trials")->default_str(std::to_string(d.tpe.n_init));
  s->add_option("--tpe-candidates", st.tpe_candidates, "TPE candidates per suggestion")
      ->default_str(std::to_string(d.tpe.n_candidates));
  s->add_option("--hb-eta", st.hb_eta, "Hyperband reduction factor")->default_str(std::to_string(d.hyperband.eta));
  s->add_option("--epochs-max", st.epochs_max, "Hyperband maximum epochs (default: --epochs)")
      ->default_str(std::to_string(d.hyperband.epochs_max));
  s->add_option("--rl-hidden", st.rl_hidden, "Controller hidden width")->default_str(std::to_string(d.reinforce.hidden));
  s->add_option("--rl-lr", st.rl_lr, "Controller learning rate")->default_str(format_number(d.reinforce.learning_rate));
  s->add_option("--rl-baseline-decay", st.rl_baseline_decay, "Reward baseline decay")
      ->default_str(format_number(d.reinforce.baseline_decay));
  s->add_option("--rl-entropy", st.rl_entropy, "Entropy bonus weight")
      ->default_str(format_number(d.reinforce.entropy_weight));
  s->add_option("--surrogate-noise", st.surrogate_noise, "Surrogate noise amplitude at full budget")
      ->default_str(format_number(d.surrogate_noise));
  s->add_flag("--retest", st.retest, "Run the final retest after the study");

  RetestArgs rt;
  auto* r = app.add_subcommand("retest", "Retrain the best trial and score the test split");
  r->add_option("--study", rt.study, "Study log (JSONL)")->required();
  r->add_option("--reps", rt.reps, "Retest replications (default: the study's retest_reps)")
      ->default_str(std::to_string(d.retest_reps));
  r->add_option("--jobs", rt.jobs, "Parallel replications (0: available cores)")->capture_default_str();

  ReportArgs rp;
  auto* o = app.add_subcommand("report", "Export history, slice and summary files");
  o->add_option("--study", rp.study, "Study log (JSONL)")->required();
  o->add_option("--out", rp.out, "Output directory")->required();

  bench::BenchOptions bo;
  auto* b = app.add_subcommand("bench", "Surrogate verification suite");
  b->add_option("--studies", bo.studies, "Repeated studies per strategy")->capture_default_str();
  b->add_option("--n-trials", bo.n_trials, "Trials per study")->capture_default_str();
  b->add_option("--reps", bo.n_reps, "Replications per trial")->capture_default_str();
  b->add_option("--epochs", bo.epochs, "Full budget (surrogate fidelity)")->capture_default_str();
  auto* bseed = b->add_option("--seed", bo.seed, "Bench seed (fallback: CHAINSEARCH_SEED)")->capture_default_str();
  b->add_option("--jobs", bo.jobs, "Parallel replications")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*p) return cmd_prep(prep, out);
    if (*s) return cmd_study(st, out);
    if (*r) return cmd_retest(rt, out);
    if (*o) return cmd_report(rp, out);
    if (*b) {
      if (bo.studies < 1 || bo.n_trials < 1 || bo.n_reps < 1 || bo.epochs < 1)
        throw DomainError("bench counts must be >= 1");
      return cmd_bench(bo, bseed->count() > 0, out);
    }
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace chainsearch::cli
