// Small TPE study over the LSTM space on the synthetic lead-lag dataset.

#include <chainsearch/chainsearch.hpp>

#include <cstdio>

using namespace chainsearch;

int main(int argc, char** argv) {
  StudyConfig c;
  c.strategy = StrategyKind::Tpe;
  c.arch_kind = ArchKind::Lstm;
  c.n_trials = argc > 1 ? std::stoul(argv[1]) : 8;
  c.epochs = 5;
  c.n_reps = 2;
  c.dataset.synthetic = SynthSpec{};
  const auto log = run_study(c);
  for (const auto& t : log.trials)
    std::printf("%2zu auc=%.4f %s\n", t.trial, t.result.objective, to_json(t.result.config).dump().c_str());
  const auto r = final_retest(log, 5);
  std::printf("retest trial %zu: validation auc %.4f +- %.4f, test auc %.4f +- %.4f\n", r.trial,
              r.validation_mean.auc, r.validation_std.auc, r.test_mean.auc, r.test_std.auc);
}
