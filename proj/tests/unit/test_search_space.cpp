#include <catch_amalgamated.hpp>

#include <chainsearch/search_space.hpp>

#include <algorithm>
#include <cmath>
#include <set>

using namespace chainsearch;
using Catch::Approx;

namespace {

bool mentions(const ValidationError& e, const std::string& needle) {
  for (const auto& v : e.violations())
    if (v.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("builtin spaces carry the documented parameters") {
  const auto cnn = builtin_space(ArchKind::Cnn1d);
  REQUIRE(cnn.fixed.at("conv_layers") == 3);
  CHECK(builtin_space(ArchKind::Mlp).contains("dropout_rate"));
  CHECK(builtin_space(ArchKind::Lstm).contains("chunk_length"));

  const auto mlp = builtin_space("mlp");
  REQUIRE(mlp.params.size() == 4);
  CHECK(mlp.params[0] == ParamSpec::int_range("n_hidden_layers", 1, 4, 1));
  CHECK(mlp.params[1] == ParamSpec::int_range("units_per_layer", 16, 256, 16));
  CHECK(mlp.params[2] == ParamSpec::float_range("dropout_rate", 0.0, 0.6));
  CHECK(mlp.params[3] == ParamSpec::log_range("learning_rate", 1e-5, 1e-2));

  std::vector<std::string> cnn_names;
  for (const auto& p : cnn.params) cnn_names.push_back(p.name);
  CHECK(cnn_names == std::vector<std::string>{"chunk_length", "kernel_size_1", "kernel_size_2", "kernel_size_3",
                                              "n_filters", "dropout_rate", "learning_rate"});

  const auto lstm = builtin_space(ArchKind::Lstm);
  CHECK(*lstm.find("hidden_units") == ParamSpec::int_range("hidden_units", 8, 128, 8));
  CHECK(*lstm.find("n_stacked_layers") == ParamSpec::int_range("n_stacked_layers", 1, 3, 1));

  const auto sur = builtin_space(ArchKind::Surrogate);
  CHECK(*sur.find("x2") == ParamSpec::log_range("x2", 1e-4, 1.0));
  CHECK(sur.find("c")->choices == std::vector<std::string>{"a", "b", "c", "d"});

  CHECK_THROWS_AS(builtin_space("transformer"), DomainError);
}

TEST_CASE("space invariants are enforced") {
  SearchSpace s;
  s.arch_kind = ArchKind::Surrogate;
  s.params = {ParamSpec::float_range("x", 1.0, 1.0)};
  CHECK_THROWS_AS(check_space(s), DomainError);
  s.params = {ParamSpec::log_range("x", 0.0, 1.0)};
  CHECK_THROWS_AS(check_space(s), DomainError);
  s.params = {ParamSpec::int_range("x", 0, 4, 0)};
  CHECK_THROWS_AS(check_space(s), DomainError);
  s.params = {ParamSpec::categorical("x", {})};
  CHECK_THROWS_AS(check_space(s), DomainError);
  s.params = {ParamSpec::categorical("x", {"a", "a"})};
  CHECK_THROWS_AS(check_space(s), DomainError);
  s.params = {ParamSpec::float_range("x", 0, 1), ParamSpec::float_range("x", 0, 2)};
  CHECK_THROWS_AS(check_space(s), DomainError);
}

TEST_CASE("sampling is deterministic and respects every domain") {
  const auto sur = builtin_space(ArchKind::Surrogate);
  CHECK(sample(sur, 42) == sample(sur, 42));
  CHECK_FALSE(sample(sur, 42) == sample(sur, 43));

  for (auto kind : {ArchKind::Mlp, ArchKind::Cnn1d, ArchKind::Lstm, ArchKind::Surrogate}) {
    const auto space = builtin_space(kind);
    std::size_t bad = 0;
    for (std::uint64_t seed = 0; seed < 100000; ++seed)
      if (!violations(space, sample(space, seed)).empty()) ++bad;
    CHECK(bad == 0);
  }
}

TEST_CASE("int-range sampling is uniform over steps (chi-square oracle)") {
  SearchSpace s;
  s.arch_kind = ArchKind::Surrogate;
  s.params = {ParamSpec::int_range("k", 1, 4, 1)};
  std::array<double, 4> counts{};
  const int n = 10000;
  for (int seed = 0; seed < n; ++seed) counts[std::size_t(sample(s, std::uint64_t(seed)).get_int("k") - 1)] += 1;
  const double expected = n * 0.25;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  double chi2 = 0.0;
  for (double c : counts) {
    CHECK(std::abs(c - expected) <= 3 * sigma);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  CHECK(chi2 < 16.27);  // chi-square(3) 0.999 quantile
}

TEST_CASE("log-range sampling has its median at the geometric midpoint") {
  SearchSpace s;
  s.arch_kind = ArchKind::Surrogate;
  s.params = {ParamSpec::log_range("x", 1e-4, 1.0)};
  std::vector<double> xs;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) xs.push_back(sample(s, seed).get_double("x"));
  std::nth_element(xs.begin(), xs.begin() + 5000, xs.end());
  const double med = xs[5000];
  CHECK(med > 1e-2 / 1.3);
  CHECK(med < 1e-2 * 1.3);
}

TEST_CASE("validate reports every violation") {
  const auto mlp = builtin_space(ArchKind::Mlp);
  auto c = sample(mlp, 1);
  REQUIRE_NOTHROW(validate(mlp, c));

  auto misaligned = c;
  misaligned.values["units_per_layer"] = std::int64_t{17};
  try {
    validate(mlp, misaligned);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(mentions(e, "step"));
  }

  auto missing = c;
  missing.values.erase("learning_rate");
  missing.values["dropout_rate"] = 0.9;
  missing.values["bogus"] = 1.0;
  try {
    validate(mlp, missing);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.violations().size() == 3);
    CHECK(mentions(e, "learning_rate"));
    CHECK(mentions(e, "dropout_rate"));
    CHECK(mentions(e, "bogus"));
  }

  auto wrong_type = c;
  wrong_type.values["n_hidden_layers"] = std::string("two");
  CHECK_THROWS_AS(validate(mlp, wrong_type), ValidationError);

  auto sur = sample(builtin_space(ArchKind::Surrogate), 3);
  sur.values["c"] = std::string("z");
  CHECK_THROWS_AS(validate(builtin_space(ArchKind::Surrogate), sur), ValidationError);
}

TEST_CASE("encoding examples") {
  const auto cat = ParamSpec::categorical("c", {"a", "b", "c", "d"});
  CHECK(encode_value(cat, std::string("c")) == 2);
  const auto k = ParamSpec::int_range("k", 1, 4, 1);
  CHECK(encode_value(k, std::int64_t{4}) == 3);
  CHECK(std::get<std::int64_t>(decode_value(k, 3)) == 4);

  const auto x = ParamSpec::float_range("x", 0.0, 1.0);
  CHECK(encode_value(x, 0.0) == 0);
  CHECK(encode_value(x, 1.0) == kGridBuckets - 1);
  CHECK(std::get<double>(decode_value(x, 0)) == Approx(1.0 / 32));
  const auto lg = ParamSpec::log_range("y", 1e-4, 1.0);
  CHECK(std::get<double>(decode_value(lg, 0)) == Approx(std::pow(10.0, -4.0 + 0.125)));

  const auto sur = builtin_space(ArchKind::Surrogate);
  CHECK_THROWS_AS(decode(sur, {0, 0}), DomainError);
  CHECK_THROWS_AS(decode(sur, {16, 0, 0}), DomainError);
  CHECK_THROWS_AS(decode(sur, {0, 0, 4}), DomainError);
}

TEST_CASE("decode/encode round-trips on grid points and is injective") {
  for (auto kind : {ArchKind::Mlp, ArchKind::Cnn1d, ArchKind::Lstm, ArchKind::Surrogate}) {
    const auto space = builtin_space(kind);
    std::set<std::vector<std::size_t>> seen;
    std::set<std::string> configs;
    Rng rng(static_cast<std::uint64_t>(kind));
    for (int i = 0; i < 2000; ++i) {
      std::vector<std::size_t> tokens;
      for (const auto& p : space.params) tokens.push_back(rng.index(p.grid_size()));
      const auto c = decode(space, tokens);
      REQUIRE(violations(space, c).empty());
      CHECK(encode(space, c) == tokens);
      CHECK(decode(space, encode(space, c)) == c);
      if (seen.insert(tokens).second) configs.insert(to_json(c).dump());
    }
    CHECK(configs.size() == seen.size());
  }
}

TEST_CASE("search spaces and configurations round-trip through JSON") {
  for (auto kind : {ArchKind::Mlp, ArchKind::Cnn1d, ArchKind::Lstm, ArchKind::Surrogate}) {
    const auto space = builtin_space(kind);
    const auto back = space_from_json(json::parse(to_json(space).dump()));
    CHECK(back.arch_kind == space.arch_kind);
    CHECK(back.params == space.params);
    CHECK(back.fixed == space.fixed);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto c = sample(space, seed);
      CHECK(config_from_json(space, json::parse(to_json(c).dump())) == c);
    }
  }
  CHECK_THROWS_AS(space_from_json(json::parse(R"({"arch_kind":"mlp","params":[{"name":"x"}]})")), DomainError);
  CHECK_THROWS_AS(load_space("/nonexistent/space.json"), DomainError);
}
