#include <catch_amalgamated.hpp>

#include <chainsearch/study.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace chainsearch;
namespace fs = std::filesystem;

namespace {

StudyConfig small(StrategyKind s, std::size_t n_trials = 40) {
  StudyConfig c;
  c.strategy = s;
  c.n_trials = n_trials;
  c.n_reps = 3;
  c.epochs = 27;
  c.hyperband.epochs_max = 27;
  c.master_seed = 21;
  c.jobs = 2;
  return c;
}

// Trial records compared field by field, ignoring wall time.
void require_same_trials(const StudyLog& a, const StudyLog& b) {
  REQUIRE(a.trials.size() == b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    const auto& x = a.trials[i];
    const auto& y = b.trials[i];
    REQUIRE(x.trial == y.trial);
    REQUIRE(x.result == y.result);
    REQUIRE(x.extra == y.extra);
  }
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "chainsearch_study_test";
  fs::create_directories(dir);
  const auto p = dir / name;
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("a single random trial") {
  auto c = small(StrategyKind::Random, 1);
  const auto log = run_study(c);
  REQUIRE(log.trials.size() == 1);
  CHECK(log.trials[0].trial == 0);
  CHECK(log.trials[0].result.reps.size() == 3);
  CHECK(log.best_trial() == std::optional<std::size_t>(0));
}

TEST_CASE("studies are deterministic") {
  for (auto s : {StrategyKind::Random, StrategyKind::Tpe, StrategyKind::Reinforce, StrategyKind::Hyperband}) {
    INFO(to_string(s));
    auto c = small(s);
    const auto a = run_study(c);
    c.jobs = 1;
    const auto b = run_study(c);
    require_same_trials(a, b);
    for (std::size_t i = 0; i < a.trials.size(); ++i) CHECK(a.trials[i].trial == i);
  }
}

TEST_CASE("hyperband studies respect the config cap and count budgets") {
  auto c = small(StrategyKind::Hyperband, 60);
  const auto log = run_study(c);
  std::set<std::uint64_t> ids;
  std::size_t budget = 0;
  std::map<std::uint64_t, std::size_t> last;
  for (const auto& t : log.trials) {
    const auto id = t.extra.at("config_id").get<std::uint64_t>();
    ids.insert(id);
    budget += t.result.epochs - std::min(last[id], t.result.epochs);
    last[id] = t.result.epochs;
  }
  CHECK(ids.size() == 60);
  CHECK(*ids.rbegin() == 59);
  CHECK(log.total_epochs() == budget);
  CHECK(log.full_training_equivalents() == double(budget) / 27.0);
  // a single pass over (27, 3) samples 27 + 12 + 6 + 4 = 49 configs
  CHECK(log.trials.back().extra.at("pass") == 1);
  const auto best = log.best_trial();
  REQUIRE(best);
  CHECK(log.trials[*best].result.epochs == 27);
  for (const auto& t : log.trials)
    if (t.result.epochs == 27) CHECK(t.result.objective <= log.trials[*best].result.objective);
}

TEST_CASE("best trial ignores partial budgets and breaks ties early") {
  StudyLog log;
  log.config = small(StrategyKind::Random);
  auto rec = [](std::size_t t, double obj, std::size_t epochs) {
    TrialRecord r;
    r.trial = t;
    r.result.objective = obj;
    r.result.epochs = epochs;
    return r;
  };
  log.trials = {rec(0, 0.6, 27), rec(1, 0.9, 9), rec(2, 0.7, 27), rec(3, 0.7, 27)};
  CHECK(log.best_trial() == std::optional<std::size_t>(2));
  log.trials = {rec(0, 0.9, 9)};
  CHECK_FALSE(log.best_trial());
}

TEST_CASE("logs replay exactly and resume after interruption") {
  for (auto s : {StrategyKind::Random, StrategyKind::Tpe, StrategyKind::Reinforce, StrategyKind::Hyperband}) {
    INFO(to_string(s));
    const auto path = scratch(std::string(to_string(s)) + ".jsonl");
    auto c = small(s, 30);
    const auto full = run_study(c, path.string());
    const auto replay = read_log(path.string());
    require_same_trials(full, replay);
    CHECK(to_json(replay.config) == to_json(c));
    for (const auto& t : replay.trials) CHECK(aggregates_consistent(t.result, c.metric));

    // keep the header and 12 trials, plus half of the next line
    const auto lines = lines_of(path);
    REQUIRE(lines.size() > 14);
    {
      std::ofstream out(path, std::ios::trunc);
      for (std::size_t i = 0; i < 13; ++i) out << lines[i] << '\n';
      out << lines[13].substr(0, lines[13].size() / 2);
    }
    CHECK(read_log(path.string()).trials.size() == 12);
    c.jobs = 1;
    const auto resumed = run_study(c, path.string());
    require_same_trials(full, resumed);
    require_same_trials(full, read_log(path.string()));
    if (s != StrategyKind::Hyperband)
      for (std::size_t i = 0; i < 12; ++i) CHECK(resumed.trials[i].wall_ms == replay.trials[i].wall_ms);

    auto other = c;
    other.master_seed += 1;
    CHECK_THROWS_AS(run_study(other, path.string()), DomainError);
  }
}

TEST_CASE("corrupt logs are rejected") {
  const auto path = scratch("corrupt.jsonl");
  run_study(small(StrategyKind::Random, 5), path.string());
  auto lines = lines_of(path);
  auto tampered = json::parse(lines[2]);
  tampered["mean"]["auc"] = tampered["mean"]["auc"].get<double>() + 0.01;
  lines[2] = tampered.dump();
  {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
  }
  CHECK_THROWS_AS(read_log(path.string()), DomainError);
  std::istringstream gap(lines[0] + "\n" + lines[1] + "\n" + lines[3] + "\n");
  CHECK_THROWS_AS(read_log(gap), DomainError);
  std::istringstream garbage(lines[0] + "\n{oops\n" + lines[1] + "\n");
  CHECK_THROWS_AS(read_log(garbage), DomainError);
  std::istringstream headless(lines[1] + "\n");
  CHECK_THROWS_AS(read_log(headless), DomainError);
  CHECK_THROWS_AS(read_log("/nonexistent/study.jsonl"), DomainError);
}

TEST_CASE("final retest") {
  auto c = small(StrategyKind::Tpe, 25);
  c.surrogate_noise = 0.0;
  const auto path = scratch("retest.jsonl");
  const auto log = run_study(c, path.string());
  const auto r = final_retest(log, 50);
  CHECK(r.test.size() == 50);
  CHECK(r.validation.size() == 50);
  CHECK(r.trial == *log.best_trial());
  CHECK(r.test_std == MetricReport{});
  CHECK(r.test_mean.auc == log.trials[r.trial].result.mean.auc);

  std::set<std::uint64_t> search;
  for (std::uint64_t t = 0; t < c.n_trials; ++t)
    for (std::uint64_t i = 0; i < 1000; ++i) search.insert(replication_seed(c.master_seed, kSearchDomain, t, i));
  for (const auto& rep : r.test) CHECK(search.count(rep.seed) == 0);
  std::set<std::uint64_t> retest;
  for (const auto& rep : r.test) retest.insert(rep.seed);
  CHECK(retest.size() == 50);

  append_retest(path.string(), r);
  const auto back = read_log(path.string());
  REQUIRE(back.retest);
  CHECK(back.retest->test == r.test);
  CHECK(back.retest->test_mean == r.test_mean);
  CHECK(back.trials.size() == log.trials.size());
  CHECK_THROWS_AS(final_retest(log, 0), DomainError);
}

TEST_CASE("report export") {
  auto c = small(StrategyKind::Tpe, 30);
  auto log = run_study(c);
  log.retest = final_retest(log, 5);
  const auto dir = scratch("reports");
  export_reports(log, dir);
  const auto history = lines_of(dir / "history.csv");
  REQUIRE(history.size() == 31);
  CHECK(history[0] == "trial_index,mean_objective,best_so_far");
  double prev = -1.0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const double best = std::stod(history[i].substr(history[i].rfind(',') + 1));
    CHECK(best >= prev);
    prev = best;
  }
  const auto slices = lines_of(dir / "slices.csv");
  CHECK(slices.size() == 1 + 30 * log.space.params.size());
  const auto summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary["best_trial"] == *log.best_trial());
  CHECK(summary["retest"]["reps"] == 5);

  const auto h = slurp(dir / "history.csv"), s = slurp(dir / "slices.csv"), j = slurp(dir / "summary.json");
  export_reports(log, dir);
  CHECK(slurp(dir / "history.csv") == h);
  CHECK(slurp(dir / "slices.csv") == s);
  CHECK(slurp(dir / "summary.json") == j);
  CHECK_THROWS_AS(export_reports(StudyLog{}, dir), DomainError);
}

TEST_CASE("study configs round-trip through JSON") {
  StudyConfig c;
  c.strategy = StrategyKind::Hyperband;
  c.arch_kind = ArchKind::Lstm;
  c.metric = Metric::F1;
  c.n_trials = 33;
  c.epochs = 12;
  c.hyperband = {12, 2};
  c.tpe.gamma = 0.3;
  c.reinforce.learning_rate = 1e-3;
  c.dataset.synthetic = SynthSpec{};
  c.dataset.pca_k = kPcaAuto;
  const auto back = study_config_from_json(json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.dataset.pca_k == kPcaAuto);

  const auto defaults = study_config_from_json(json::parse(R"({"epochs": 40})"));
  CHECK(defaults.hyperband.epochs_max == 40);
  CHECK(defaults.n_trials == 300);
  CHECK(defaults.n_reps == 15);
  CHECK(defaults.retest_reps == 50);
  CHECK_THROWS_AS(study_config_from_json(json::parse(R"({"n_trail": 3})")), DomainError);
  CHECK_THROWS_AS(study_config_from_json(json::parse(R"({"tpe": {"gama": 0.2}})")), DomainError);
  CHECK_THROWS_AS(study_config_from_json(json::parse(R"({"strategy": "grid"})")), DomainError);
  CHECK_THROWS_AS(study_config_from_json(json::parse(R"({"n_trials": "many"})")), DomainError);

  StudyConfig bad;
  bad.n_trials = 0;
  CHECK_THROWS_AS(run_study(bad), DomainError);
  StudyConfig no_data;
  no_data.arch_kind = ArchKind::Mlp;
  CHECK_THROWS_AS(run_study(no_data), DomainError);
}

TEST_CASE("a small network study") {
  StudyConfig c;
  c.strategy = StrategyKind::Random;
  c.arch_kind = ArchKind::Mlp;
  c.n_trials = 2;
  c.epochs = 2;
  c.n_reps = 2;
  c.jobs = 2;
  SynthSpec synth;
  synth.n_rows = 300;
  synth.n_features = 4;
  c.dataset.synthetic = synth;
  const auto log = run_study(c);
  REQUIRE(log.trials.size() == 2);
  for (const auto& t : log.trials) {
    CHECK(t.result.epochs == 2);
    CHECK((t.result.objective >= 0.0 && t.result.objective <= 1.0));
  }
  const auto r = final_retest(log, 3);
  CHECK(r.test.size() == 3);
  CHECK(r.failures == 0);
}
