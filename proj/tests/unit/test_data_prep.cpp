#include <catch_amalgamated.hpp>

#include <chainsearch/data_prep.hpp>
#include <chainsearch/metrics.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace chainsearch;
using Catch::Approx;

namespace {

RawTable small_table(std::size_t rows, std::size_t extra_cols, std::uint64_t seed = 1) {
  RawTable t;
  t.target_name = "y";
  t.names.push_back("y");
  for (std::size_t c = 0; c < extra_cols; ++c) t.names.push_back("c" + std::to_string(c));
  t.columns.assign(extra_cols + 1, std::vector<double>(rows));
  Rng rng(seed);
  for (auto& col : t.columns)
    for (auto& v : col) v = rng.normal();
  const Date start{std::chrono::year{2010} / 1 / 1};
  for (std::size_t r = 0; r < rows; ++r) t.dates.push_back(start + std::chrono::days{int(r)});
  return t;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  // correlated columns
  Matrix mix(cols, cols);
  for (Eigen::Index i = 0; i < cols; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) mix(i, j) = rng.normal();
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m * mix;
}

double correlation(const Vector& a, const Vector& b) {
  const double ma = a.mean(), mb = b.mean();
  const Vector da = a.array() - ma, db = b.array() - mb;
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  return denom == 0.0 ? 0.0 : da.dot(db) / denom;
}

}  // namespace

TEST_CASE("make_labels") {
  std::vector<double> up(10), down(10);
  for (int i = 0; i < 10; ++i) {
    up[std::size_t(i)] = i;
    down[std::size_t(i)] = -i;
  }
  const auto lu = make_labels(up, 5);
  CHECK(lu.size() == 5);
  CHECK(std::all_of(lu.begin(), lu.end(), [](int l) { return l == 1; }));
  const auto ld = make_labels(down, 5);
  CHECK(std::all_of(ld.begin(), ld.end(), [](int l) { return l == 0; }));
  const std::vector<double> flat{1, 1, 1};
  CHECK(make_labels(flat, 1) == std::vector<int>{0, 0});
  CHECK_THROWS_AS(make_labels(std::vector<double>{1, 2, 3, 4, 5}, 5), DomainError);
  CHECK_THROWS_AS(make_labels(up, 0), DomainError);
}

TEST_CASE("drop_manifest_features") {
  const auto t = small_table(20, 3);
  CHECK(drop_manifest_features(t, {}) == t);
  const auto only = drop_manifest_features(t, {"c0", "c1", "c2"});
  CHECK(only.names == std::vector<std::string>{"y"});
  CHECK_THROWS_AS(drop_manifest_features(t, {"nope"}), DomainError);
  CHECK_THROWS_AS(drop_manifest_features(t, {"y"}), DomainError);

  const auto wide = small_table(5, 999);
  std::vector<std::string> manifest;
  for (int c = 0; c < 667; ++c) manifest.push_back("c" + std::to_string(c));
  CHECK(drop_manifest_features(wide, manifest).names.size() == 333);
}

TEST_CASE("normalizer") {
  Rng rng(3);
  Matrix m = random_matrix(rng, 50, 4);
  m.col(2).setConstant(7.5);
  const auto n = fit_normalizer(m);
  const Matrix z = apply_normalizer(n, m);
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    CHECK(std::abs(z.col(c).mean()) < 1e-10);
    const double sd = std::sqrt((z.col(c).array() - z.col(c).mean()).square().mean());
    CHECK((sd == Approx(1.0).margin(1e-12) || sd == 0.0));
  }
  CHECK(z.col(2).isZero(0.0));
  Matrix probe(1, 4);
  for (Eigen::Index c = 0; c < 4; ++c) probe(0, c) = n.mean[std::size_t(c)] + 2.0 * n.std[std::size_t(c)];
  CHECK(apply_normalizer(n, probe)(0, 0) == Approx(2.0));
  CHECK_THROWS_AS(fit_normalizer(Matrix(0, 3)), DomainError);
  CHECK_THROWS_AS(apply_normalizer(n, Matrix(2, 3)), DomainError);
}

TEST_CASE("pca closed-form and degenerate cases") {
  Matrix hand(4, 2);
  hand << 1, 2, 3, 4, 5, 6, 7, 8;
  const auto m = pca_fit(hand, 1);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(std::abs(m.components(0, 0)) - r) < 1e-12);
  CHECK(std::abs(std::abs(m.components(1, 0)) - r) < 1e-12);
  CHECK(m.components(0, 0) * m.components(1, 0) > 0);

  // points on a line: rank one
  Matrix line(30, 2);
  for (int i = 0; i < 30; ++i) line.row(i) << i * 0.3 - 2.0, -0.7 * (i * 0.3 - 2.0) + 1.0;
  const auto lm = pca_fit(line, 1);
  CHECK(lm.scree()[0] == Approx(1.0).margin(1e-10));

  CHECK_THROWS_AS(pca_fit(hand, 0), DomainError);
  CHECK_THROWS_AS(pca_fit(hand, 3), DomainError);
  CHECK_THROWS_AS(pca_transform(m, Matrix(2, 3)), DomainError);
}

TEST_CASE("pca on isotropic data has near-equal eigenvalues") {
  Rng rng(11);
  Matrix m(20000, 5);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  const auto p = pca_fit(m, 5);
  for (double e : p.eigenvalues) CHECK(e == Approx(1.0).epsilon(0.05));
}

TEST_CASE("pca properties on random matrices") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = Eigen::Index(10 + rng.index(120));
    const auto cols = Eigen::Index(2 + rng.index(std::min<std::size_t>(30, std::size_t(rows) - 1)));
    const Matrix x = random_matrix(rng, rows, cols);
    const auto k = std::size_t(cols);
    const auto p = pca_fit(x, k);
    const Matrix wtw = p.components.transpose() * p.components;
    CHECK((wtw - Matrix::Identity(cols, cols)).cwiseAbs().maxCoeff() < 1e-10);
    const Matrix z = pca_transform(p, x);
    CHECK((pca_inverse_transform(p, z) - x).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index a = 0; a < z.cols(); ++a) {
      const double var = (z.col(a).array() - z.col(a).mean()).square().sum() / double(rows - 1);
      CHECK(std::abs(var - p.explained(a)) < 1e-8 * std::max(1.0, p.explained(a)));
      for (Eigen::Index b = a + 1; b < z.cols(); ++b)
        if (p.explained(a) > 1e-9 && p.explained(b) > 1e-9) CHECK(std::abs(correlation(z.col(a), z.col(b))) < 1e-8);
    }
    const auto scree = p.scree();
    CHECK(std::is_sorted(scree.begin(), scree.end()));
    CHECK(scree.back() == 1.0);
    CHECK(std::is_sorted(p.eigenvalues.rbegin(), p.eigenvalues.rend()));
  }
}

TEST_CASE("scree csv and auto k") {
  Matrix hand(4, 2);
  hand << 1, 2, 3, 4, 5, 6, 7, 8;
  std::ostringstream out;
  write_scree_csv(out, pca_fit(hand, 2));
  CHECK(out.str().rfind("component_index,eigenvalue,cumulative_fraction\n1,", 0) == 0);
  CHECK(auto_pca_k({0.5, 0.9, 0.96, 1.0}) == 3);
  CHECK(auto_pca_k({0.95, 1.0}) == 1);
}

TEST_CASE("chrono_split") {
  auto c = chrono_split(100);
  CHECK((c.train == 70 && c.validation == 20 && c.test == 10));
  c = chrono_split(10);
  CHECK((c.train == 7 && c.validation == 2 && c.test == 1));
  CHECK_THROWS_AS(chrono_split(3), DomainError);
  CHECK_THROWS_AS(chrono_split(100, {0.5, 0.5, 0.0}), DomainError);
  for (std::size_t n = 10; n < 2000; n += 37) {
    const auto s = chrono_split(n);
    CHECK(s.train + s.validation + s.test == n);
    CHECK(s.train == std::size_t(std::floor(0.7 * double(n) + 1e-9)));
  }
}

TEST_CASE("make_windows") {
  Matrix m(20, 3);
  for (Eigen::Index i = 0; i < 20; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) m(i, j) = double(i * 10 + j);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[std::size_t(i)] = (i * 7) % 3 == 0;
  const auto w = make_windows(m, labels, 5);
  CHECK(w.count() == 16);
  for (std::size_t i = 0; i < w.count(); ++i) {
    CHECK(w.labels[i] == labels[i + 4]);
    const auto s = w.sample(i);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t c = 0; c < 3; ++c) CHECK(s[t * 3 + c] == float(m(Eigen::Index(i + t), Eigen::Index(c))));
  }
  const auto one = make_windows(m, labels, 1);
  CHECK(one.count() == 20);
  CHECK(one.labels == labels);
  CHECK(make_windows(m, labels, 20).count() == 1);
  CHECK_THROWS_AS(make_windows(m, labels, 21), DomainError);
  CHECK_THROWS_AS(make_windows(m, labels, 0), DomainError);
}

TEST_CASE("window labels align with make_labels on small tables") {
  for (std::size_t rows = 12; rows < 30; ++rows) {
    const auto t = small_table(rows, 2, rows);
    const auto labels = make_labels(t.target(), 2);
    Matrix m(Eigen::Index(labels.size()), 1);
    for (std::size_t r = 0; r < labels.size(); ++r) m(Eigen::Index(r), 0) = t.target()[r];
    for (std::size_t L = 1; L <= labels.size(); ++L) {
      const auto w = make_windows(m, labels, L);
      for (std::size_t i = 0; i < w.count(); ++i) REQUIRE(w.labels[i] == labels[i + L - 1]);
    }
  }
}

TEST_CASE("csv reading with forward fill") {
  std::istringstream in(
      "date,price,vol\n"
      "2020-01-01,,1\n"
      "2020-01-02,10,NA\n"
      "2020-01-03,11,\n"
      "2020-01-06,NaN,4\n");
  const auto t = read_csv(in, "price");
  REQUIRE(t.rows() == 3);
  CHECK(format_date(t.dates.front()) == "2020-01-02");
  CHECK(t.column("price") == std::vector<double>{10, 11, 11});
  CHECK(t.column("vol") == std::vector<double>{1, 1, 4});

  std::istringstream unsorted("date,p\n2020-01-02,1\n2020-01-01,2\n");
  CHECK_THROWS_AS(read_csv(unsorted, "p"), DomainError);
  std::istringstream no_target("date,p\n2020-01-02,1\n");
  CHECK_THROWS_AS(read_csv(no_target, "q"), DomainError);
  std::istringstream bad_date("date,p\n2020-13-02,1\n");
  CHECK_THROWS_AS(read_csv(bad_date, "p"), DomainError);
  std::istringstream bad_num("date,p\n2020-01-02,abc\n");
  CHECK_THROWS_AS(read_csv(bad_num, "p"), DomainError);

  std::ostringstream out;
  write_csv(out, t);
  std::istringstream again(out.str());
  CHECK(read_csv(again, "price") == t);
}

TEST_CASE("synthetic generator") {
  SynthSpec spec;
  spec.n_rows = 600;
  spec.noise_level = 0.0;
  const auto t = synth_dataset(spec);
  CHECK(t == synth_dataset(spec));
  std::ostringstream a, b;
  write_csv(a, t);
  write_csv(b, synth_dataset(spec));
  CHECK(a.str() == b.str());
  CHECK(t.names.size() == spec.n_features + 1);

  auto oracle_auc = [](const RawTable& table, const SynthSpec& s) {
    const auto labels = make_labels(table.target(), s.horizon);
    const auto& f0 = table.column("f0");
    std::vector<double> scores;
    std::vector<int> ys;
    for (std::size_t r = s.signal_lag; r < labels.size(); ++r) {
      scores.push_back(0.5 + 0.5 * std::tanh(f0[r - s.signal_lag]));
      ys.push_back(labels[r]);
    }
    return roc_auc(ScoredLabels(scores, ys));
  };
  CHECK(oracle_auc(t, spec) == 1.0);

  spec.n_rows = 4000;
  spec.noise_level = 1e6;
  CHECK(oracle_auc(synth_dataset(spec), spec) == Approx(0.5).margin(0.05));

  spec.n_rows = 5;
  CHECK_THROWS_AS(synth_dataset(spec), DomainError);
  CHECK(synth_spec_from_json(to_json(SynthSpec{})).n_rows == 2000);
}

TEST_CASE("prepared bundles are chronological and leak-free") {
  const auto raw = synth_dataset(SynthSpec{});
  PrepOptions opt;
  const auto b = prepare_bundle(raw, opt);
  CHECK(is_chronological(b));
  const std::size_t n = raw.rows() - opt.horizon;
  CHECK(b.train.rows() == 1396);
  CHECK(b.train.rows() + b.validation.rows() + b.test.rows() == n);
  CHECK(b.n_features() == 21);

  // perturbing validation/test rows leaves train statistics untouched
  auto perturbed = raw;
  for (auto& col : perturbed.columns)
    for (std::size_t r = b.train.rows(); r < col.size(); ++r) col[r] += 100.0 * double(r % 7);
  PrepOptions with_pca = opt;
  with_pca.pca_k = 6;
  const auto p1 = prepare_bundle(raw, with_pca);
  const auto p2 = prepare_bundle(perturbed, with_pca);
  CHECK(p1.normalizer == p2.normalizer);
  CHECK(*p1.pca == *p2.pca);
  CHECK(p1.n_features() == 6);
  CHECK(p1.train.features == p2.train.features);

  with_pca.pca_k = kPcaAuto;
  const auto pa = prepare_bundle(raw, with_pca);
  CHECK(pa.pca->k == auto_pca_k(pa.pca->scree()));
}

TEST_CASE("bundles round-trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "chainsearch_bundle_test";
  std::filesystem::remove_all(dir);
  PrepOptions opt;
  opt.pca_k = 4;
  SynthSpec spec;
  spec.n_rows = 300;
  const auto b = prepare_bundle(synth_dataset(spec), opt);
  write_bundle(dir, b);
  CHECK(std::filesystem::exists(dir / "scree.csv"));
  const auto back = read_bundle(dir);
  CHECK(back.train.features == b.train.features);
  CHECK(back.validation.labels == b.validation.labels);
  CHECK(back.test.dates == b.test.dates);
  CHECK(back.normalizer == b.normalizer);
  CHECK(*back.pca == *b.pca);
  CHECK(back.feature_names == b.feature_names);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_bundle(dir), DomainError);
}
