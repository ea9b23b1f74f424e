// Runs each strategy once on the surrogate landscape and prints the
// configuration it settled on.

#include <chainsearch/chainsearch.hpp>

#include <cstdio>

using namespace chainsearch;

int main() {
  for (auto s : {StrategyKind::Random, StrategyKind::Tpe, StrategyKind::Hyperband, StrategyKind::Reinforce}) {
    StudyConfig c;
    c.strategy = s;
    c.master_seed = 7;
    c.jobs = 1;
    const auto log = run_study(c);
    const auto& best = log.trials[*log.best_trial()];
    std::printf("%-10s records=%3zu best=%.4f clean=%.4f  %s\n", to_string(s), log.trials.size(),
                best.result.objective, surrogate_clean_auc(best.result.config),
                to_json(best.result.config).dump().c_str());
  }
}
