#include <catch_amalgamated.hpp>

#include <chainsearch/data_prep.hpp>
#include <chainsearch/metrics.hpp>
#include <chainsearch/nnet.hpp>

#include <cstring>
#include <numeric>
#include <sstream>

using namespace chainsearch;
using namespace chainsearch::nnet;

namespace {

WindowSet random_windows(const ModelSpec& s, std::size_t count, std::uint64_t seed) {
  WindowSet w;
  w.length = s.chunk_length;
  w.width = s.n_features;
  Rng rng(seed);
  w.data.resize(count * w.length * w.width);
  for (auto& v : w.data) v = static_cast<float>(rng.normal());
  for (std::size_t i = 0; i < count; ++i) w.labels.push_back(rng.uniform() < 0.5 ? 0 : 1);
  return w;
}

ModelSpec random_spec(ArchKind arch, Rng& rng) {
  ModelSpec s;
  s.arch = arch;
  s.n_features = 1 + rng.index(4);
  s.dropout_rate = 0.3;
  switch (arch) {
    case ArchKind::Mlp:
      s.n_layers = 1 + rng.index(2);
      s.units = 2 + rng.index(10);
      break;
    case ArchKind::Cnn1d:
      s.n_layers = kConvLayers;
      s.chunk_length = 22 + rng.index(9);
      s.units = 2 + rng.index(4);
      for (auto& k : s.kernels) k = 2 + rng.index(2);
      break;
    case ArchKind::Lstm:
      s.n_layers = 1 + rng.index(2);
      s.units = 2 + rng.index(5);
      s.chunk_length = 2 + rng.index(5);
      break;
    case ArchKind::Surrogate: break;
  }
  return s;
}

struct Prepared {
  DatasetBundle bundle;
  WindowSet train, validation;
};

Prepared noise_free(std::size_t chunk) {
  SynthSpec synth;
  synth.noise_level = 0.0;
  synth.n_features = 5;
  Prepared p{prepare_bundle(synth_dataset(synth), PrepOptions{}), {}, {}};
  p.train = make_windows(p.bundle.train.features, p.bundle.train.labels, chunk);
  p.validation = make_windows(p.bundle.validation.features, p.bundle.validation.labels, chunk);
  return p;
}

}  // namespace

TEST_CASE("parameter counts") {
  ModelSpec mlp;
  mlp.arch = ArchKind::Mlp;
  mlp.n_features = 10;
  mlp.n_layers = 2;
  mlp.units = 32;
  CHECK(parameter_count(mlp) == (10 * 32 + 32) + (32 * 32 + 32) + (32 * 1 + 1));

  ModelSpec lstm;
  lstm.arch = ArchKind::Lstm;
  lstm.n_features = 4;
  lstm.units = 8;
  lstm.chunk_length = 5;
  CHECK(parameter_count(lstm) == 416 + 9);

  ModelSpec cnn;
  cnn.arch = ArchKind::Cnn1d;
  cnn.n_features = 3;
  cnn.n_layers = 3;
  cnn.units = 4;
  cnn.chunk_length = 5;
  cnn.kernels = {7, 2, 2};
  CHECK_THROWS_AS(make_layout(cnn), InvalidArchitectureError);
  cnn.chunk_length = 30;
  cnn.kernels = {3, 3, 2};
  // lengths 30 -> 28 -> 14 -> 12 -> 6 -> 5 -> 2
  CHECK(parameter_count(cnn) == (3 * 3 * 4 + 4) + (3 * 4 * 4 + 4) + (2 * 4 * 4 + 4) + (2 * 4 + 1));
}

TEST_CASE("build_model resolves configurations") {
  const auto space = builtin_space(ArchKind::Lstm);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = sample(space, seed);
    const auto s = build_model(c, {7});
    CHECK(s.arch == ArchKind::Lstm);
    CHECK(s.n_features == 7);
    CHECK(s.chunk_length == std::size_t(c.get_int("chunk_length")));
    CHECK(model_spec_from_json(to_json(s)) == s);
  }
  CHECK_THROWS_AS(build_model(sample(builtin_space(ArchKind::Surrogate), 1), {3}), InvalidArchitectureError);
}

TEST_CASE("gradients match finite differences") {
  Rng rng(2024);
  for (auto arch : {ArchKind::Mlp, ArchKind::Cnn1d, ArchKind::Lstm}) {
    for (int draw = 0; draw < 20; ++draw) {
      const auto spec = random_spec(arch, rng);
      REQUIRE(parameter_count(spec) <= 2000);
      const auto batch = random_windows(spec, 6, rng.next_u64());
      const double err = grad_check(spec, batch, rng.next_u64());
      INFO(to_string(arch) << " " << to_json(spec).dump());
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("training is deterministic and resumable") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto arch = std::array{ArchKind::Mlp, ArchKind::Cnn1d, ArchKind::Lstm}[std::size_t(trial % 3)];
    const auto spec = random_spec(arch, rng);
    const auto data = random_windows(spec, 70 + rng.index(40), rng.next_u64());
    const auto seed = rng.next_u64();
    const auto full = train(spec, data, 20, seed);
    CHECK(full == train(spec, data, 20, seed));
    CHECK(full.epochs_completed == 20);
    CHECK(resume(train(spec, data, 10, seed), data, 10) == full);

    auto chained = train(spec, data, 2, seed);
    for (int k = 0; k < 4; ++k) chained = resume(chained, data, 2);
    CHECK(chained == train(spec, data, 10, seed));
    CHECK(resume(chained, data, 0) == chained);
  }
}

TEST_CASE("one epoch moves the weights") {
  Rng rng(5);
  const auto spec = random_spec(ArchKind::Mlp, rng);
  const auto data = random_windows(spec, 40, 9);
  const auto ck = train(spec, data, 1, 3);
  CHECK(ck.state.weights != initial_checkpoint(spec, 3).state.weights);
  CHECK_THROWS_AS(train(spec, data, 0, 3), DomainError);
  WindowSet empty;
  empty.length = spec.chunk_length;
  empty.width = spec.n_features;
  CHECK_THROWS_AS(train(spec, empty, 1, 3), DomainError);
}

TEST_CASE("prediction") {
  Rng rng(8);
  for (auto arch : {ArchKind::Mlp, ArchKind::Cnn1d, ArchKind::Lstm}) {
    const auto spec = random_spec(arch, rng);
    const auto data = random_windows(spec, 50, 4);
    auto ck = initial_checkpoint(spec, 1);
    std::fill(ck.state.weights.begin(), ck.state.weights.end(), 0.0f);
    for (double s : predict(ck, data)) CHECK(s == 0.5);
    const auto trained = train(spec, data, 3, 2);
    const auto p = predict(trained, data);
    CHECK(p == predict(trained, data));
    for (double s : p) CHECK((s > 0.0 && s < 1.0));
    auto wrong = spec;
    wrong.n_features += 1;
    CHECK_THROWS_AS(predict(trained, random_windows(wrong, 5, 1)), DomainError);
  }
}

TEST_CASE("inverted dropout preserves the expected logit") {
  ModelSpec spec;
  spec.arch = ArchKind::Mlp;
  spec.n_features = 6;
  spec.n_layers = 1;
  spec.units = 24;
  spec.dropout_rate = 0.4;
  const auto w = init_weights<double>(spec, 12);
  const auto x = random_windows(spec, 4, 3);
  const std::vector<double> xd(x.data.begin(), x.data.end());
  Network<double> net(spec);
  std::vector<double> clean(4), noisy(4), sum(4, 0.0);
  net.logits(xd.data(), 4, w, clean.data());
  Rng rng(99);
  const int masks = 10000;
  for (int m = 0; m < masks; ++m) {
    net.logits(xd.data(), 4, w, noisy.data(), Dropout{&rng, spec.dropout_rate});
    for (std::size_t b = 0; b < 4; ++b) sum[b] += noisy[b];
  }
  for (std::size_t b = 0; b < 4; ++b) {
    INFO("clean " << clean[b] << " averaged " << sum[b] / masks);
    CHECK(std::abs(sum[b] / masks - clean[b]) <= 0.02 * std::max(std::abs(clean[b]), 0.1));
  }
}

TEST_CASE("loss falls and the planted signal is recovered on noise-free data") {
  const auto p = noise_free(5);
  ModelSpec lstm;
  lstm.arch = ArchKind::Lstm;
  lstm.n_features = p.bundle.n_features();
  lstm.chunk_length = 5;
  lstm.units = 16;
  lstm.learning_rate = 3e-3;
  std::vector<double> losses;
  const auto ck = train(lstm, p.train, 80, 21, &losses);
  REQUIRE(losses.size() == 80);
  std::vector<double> block;
  for (std::size_t i = 0; i < 80; i += 5)
    block.push_back(std::accumulate(losses.begin() + long(i), losses.begin() + long(i + 5), 0.0) / 5.0);
  CHECK(block.back() < 0.5 * block.front());
  // Kendall tau of block means against block index
  int concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < block.size(); ++i)
    for (std::size_t j = i + 1; j < block.size(); ++j) (block[j] < block[i] ? discordant : concordant)++;
  CHECK(double(concordant - discordant) / double(concordant + discordant) < -0.8);
  const auto auc = roc_auc(ScoredLabels(predict(ck, p.validation), p.validation.labels));
  CHECK(auc >= 0.95);
}

TEST_CASE("checkpoint files round-trip and reject corruption") {
  Rng rng(31);
  const auto spec = random_spec(ArchKind::Lstm, rng);
  const auto ck = train(spec, random_windows(spec, 40, 2), 2, 17);
  std::stringstream buf;
  write_checkpoint(buf, ck);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "CSNN");
  std::istringstream in(bytes);
  CHECK(read_checkpoint(in) == ck);

  auto corrupt = [](std::string s) {
    std::istringstream is(s);
    return read_checkpoint(is);
  };
  CHECK_THROWS_AS(corrupt("XXXX" + bytes.substr(4)), CheckpointError);
  CHECK_THROWS_AS(corrupt(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  std::string version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(corrupt(version), CheckpointError);
  std::string nan = bytes;
  const float bad = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + nan.size() - 8 - 4, &bad, 4);
  CHECK_THROWS_AS(corrupt(nan), CheckpointError);

  auto wrong = ck;
  wrong.state.weights.pop_back();
  std::stringstream out;
  CHECK_THROWS_AS(write_checkpoint(out, wrong), CheckpointError);
}
