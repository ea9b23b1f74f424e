#pragma once

// Raw table handling and the preprocessing pipeline: labels, manifest-based
// feature removal, normalization, PCA, chronological splits and windows.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <limits>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"
#include "windows.hpp"

namespace chainsearch {

using json = nlohmann::json;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Date = std::chrono::sys_days;

inline Date parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream in(s);
  in >> y >> dash1 >> m >> dash2 >> d;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!in || dash1 != '-' || dash2 != '-' || !ymd.ok()) throw DomainError("invalid ISO-8601 date '" + s + "'");
  return Date{ymd};
}

inline std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RawTable {
  std::vector<Date> dates;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  std::string target_name;

  std::size_t rows() const noexcept { return dates.size(); }

  std::size_t column_index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DomainError("no column named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
  const std::vector<double>& column(const std::string& name) const { return columns[column_index(name)]; }
  const std::vector<double>& target() const { return column(target_name); }

  bool operator==(const RawTable&) const = default;
};

inline void check_table(const RawTable& t) {
  if (t.names.size() != t.columns.size()) throw DomainError("column names and data differ");
  for (const auto& c : t.columns)
    if (c.size() != t.dates.size()) throw DomainError("columns differ in length");
  for (std::size_t i = 1; i < t.dates.size(); ++i)
    if (!(t.dates[i - 1] < t.dates[i])) throw DomainError("dates are not strictly increasing");
  (void)t.column_index(t.target_name);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  out.push_back(cell);
  return out;
}

inline bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

}  // namespace detail

// Reads a daily table; missing cells are forward-filled and leading rows
// that remain incomplete are dropped.
inline RawTable read_csv(std::istream& in, const std::string& target_name) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("empty CSV input");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = detail::split_csv_line(line);
  if (header.size() < 2) throw DomainError("CSV needs a date column and at least one value column");
  RawTable t;
  t.target_name = target_name;
  t.names.assign(header.begin() + 1, header.end());
  t.columns.resize(t.names.size());
  std::vector<std::vector<bool>> present(t.names.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DomainError("CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    t.dates.push_back(parse_date(cells[0]));
    for (std::size_t c = 0; c < t.names.size(); ++c) {
      const auto& s = cells[c + 1];
      if (detail::is_missing(s)) {
        t.columns[c].push_back(std::numeric_limits<double>::quiet_NaN());
        present[c].push_back(false);
        continue;
      }
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || !std::isfinite(v))
        throw DomainError("CSV line " + std::to_string(lineno) + ": non-numeric cell '" + s + "'");
      t.columns[c].push_back(v);
      present[c].push_back(true);
    }
  }
  std::size_t first_complete = 0;
  for (std::size_t c = 0; c < t.names.size(); ++c) {
    std::size_t r = 0;
    while (r < t.dates.size() && !present[c][r]) ++r;
    first_complete = std::max(first_complete, r);
    for (std::size_t k = r + 1; k < t.dates.size(); ++k)
      if (!present[c][k]) t.columns[c][k] = t.columns[c][k - 1];
  }
  if (first_complete >= t.dates.size()) throw DomainError("CSV has no complete rows");
  t.dates.erase(t.dates.begin(), t.dates.begin() + static_cast<std::ptrdiff_t>(first_complete));
  for (auto& col : t.columns) col.erase(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(first_complete));
  check_table(t);
  return t;
}

inline RawTable read_csv(const std::string& path, const std::string& target_name) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path + "'");
  return read_csv(in, target_name);
}

inline void write_csv(std::ostream& out, const RawTable& t) {
  out << "date";
  for (const auto& n : t.names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    out << format_date(t.dates[r]);
    for (const auto& c : t.columns) out << ',' << format_number(c[r]);
    out << '\n';
  }
}

// label[t] = 1 iff target[t + horizon] > target[t]; the last `horizon`
// rows get no label.
inline std::vector<int> make_labels(std::span<const double> target, std::size_t horizon) {
  if (horizon < 1) throw DomainError("horizon must be >= 1");
  if (target.size() < horizon + 1)
    throw DomainError("series of length " + std::to_string(target.size()) + " too short for horizon " +
                      std::to_string(horizon));
  std::vector<int> labels(target.size() - horizon);
  for (std::size_t t = 0; t < labels.size(); ++t) labels[t] = target[t + horizon] > target[t] ? 1 : 0;
  return labels;
}

inline RawTable drop_manifest_features(const RawTable& table, const std::vector<std::string>& manifest) {
  std::set<std::string> drop;
  for (const auto& name : manifest) {
    if (name == table.target_name) throw DomainError("manifest tries to drop the target column '" + name + "'");
    (void)table.column_index(name);
    drop.insert(name);
  }
  RawTable out;
  out.dates = table.dates;
  out.target_name = table.target_name;
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (drop.count(table.names[c])) continue;
    out.names.push_back(table.names[c]);
    out.columns.push_back(table.columns[c]);
  }
  return out;
}

inline std::vector<std::string> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open manifest '" + path + "'");
  try {
    json j;
    in >> j;
    return j.get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DomainError("manifest '" + path + "' must be a JSON array of strings: " + e.what());
  }
}

// --- normalization ----------------------------------------------------------

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  bool operator==(const Normalizer&) const = default;
};

inline constexpr double kDegenerateStd = 1e-12;

inline Normalizer fit_normalizer(const Matrix& train) {
  if (train.rows() == 0 || train.cols() == 0) throw DomainError("cannot fit normalizer on an empty matrix");
  Normalizer n;
  const double rows = static_cast<double>(train.rows());
  for (Eigen::Index c = 0; c < train.cols(); ++c) {
    double mu = 0.0;
    for (Eigen::Index r = 0; r < train.rows(); ++r) mu += train(r, c);
    mu /= rows;
    double var = 0.0;
    for (Eigen::Index r = 0; r < train.rows(); ++r) var += (train(r, c) - mu) * (train(r, c) - mu);
    n.mean.push_back(mu);
    n.std.push_back(std::sqrt(var / rows));
  }
  return n;
}

inline Matrix apply_normalizer(const Normalizer& n, const Matrix& m) {
  if (static_cast<std::size_t>(m.cols()) != n.mean.size()) throw DomainError("normalizer width mismatch");
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const auto k = static_cast<std::size_t>(c);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      out(r, c) = n.std[k] < kDegenerateStd ? 0.0 : (m(r, c) - n.mean[k]) / n.std[k];
  }
  return out;
}

// --- PCA --------------------------------------------------------------------

struct PcaModel {
  Vector mean;
  Matrix components;          // n_features x k, orthonormal columns
  Vector explained;           // top-k eigenvalues, descending
  std::vector<double> eigenvalues;  // all eigenvalues, descending, clamped >= 0
  std::size_t k = 0;

  std::size_t n_features() const noexcept { return static_cast<std::size_t>(mean.size()); }

  // Cumulative normalized eigenvalue sum over all components.
  std::vector<double> scree() const {
    double total = 0.0;
    for (double e : eigenvalues) total += e;
    std::vector<double> out(eigenvalues.size(), 1.0);
    if (total <= 0.0) return out;
    double run = 0.0;
    for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
      run += eigenvalues[i];
      out[i] = std::min(1.0, run / total);
    }
    out.back() = 1.0;
    return out;
  }

  bool operator==(const PcaModel& o) const {
    return k == o.k && mean == o.mean && components == o.components && explained == o.explained &&
           eigenvalues == o.eigenvalues;
  }
};

// Eigendecomposition of the centered sample covariance of `train`.
inline PcaModel pca_fit(const Matrix& train, std::size_t k) {
  const auto n = static_cast<std::size_t>(train.rows());
  const auto f = static_cast<std::size_t>(train.cols());
  if (k < 1 || k > std::min(n, f))
    throw DomainError("PCA k=" + std::to_string(k) + " outside [1, " + std::to_string(std::min(n, f)) + "]");
  PcaModel model;
  model.k = k;
  model.mean = train.colwise().mean().transpose();
  const Matrix centered = train.rowwise() - model.mean.transpose();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const Matrix cov = (centered.transpose() * centered) / denom;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw DomainError("PCA eigendecomposition failed");
  // Eigen returns ascending order.
  const Vector evals = solver.eigenvalues();
  const Matrix evecs = solver.eigenvectors();
  model.components.resize(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k));
  model.explained.resize(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < f; ++i) {
    const auto src = static_cast<Eigen::Index>(f - 1 - i);
    double ev = evals(src);
    if (ev < 0.0) ev = 0.0;
    model.eigenvalues.push_back(ev);
    if (i >= k) continue;
    Vector v = evecs.col(src);
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    model.components.col(static_cast<Eigen::Index>(i)) = v;
    model.explained(static_cast<Eigen::Index>(i)) = ev;
  }
  return model;
}

inline Matrix pca_transform(const PcaModel& model, const Matrix& m) {
  if (static_cast<std::size_t>(m.cols()) != model.n_features())
    throw DomainError("PCA input width " + std::to_string(m.cols()) + " does not match " +
                      std::to_string(model.n_features()));
  return (m.rowwise() - model.mean.transpose()) * model.components;
}

inline Matrix pca_inverse_transform(const PcaModel& model, const Matrix& z) {
  return (z * model.components.transpose()).rowwise() + model.mean.transpose();
}

// Smallest component count whose cumulative fraction reaches `fraction`.
inline std::size_t auto_pca_k(const std::vector<double>& scree, double fraction = 0.95) {
  for (std::size_t i = 0; i < scree.size(); ++i)
    if (scree[i] >= fraction - 1e-12) return i + 1;
  return scree.size();
}

inline void write_scree_csv(std::ostream& out, const PcaModel& model) {
  const auto cum = model.scree();
  out << "component_index,eigenvalue,cumulative_fraction\n";
  for (std::size_t i = 0; i < model.eigenvalues.size(); ++i)
    out << (i + 1) << ',' << format_number(model.eigenvalues[i]) << ',' << format_number(cum[i]) << '\n';
}

// --- splitting and windows ----------------------------------------------------

struct SplitCounts {
  std::size_t train = 0, validation = 0, test = 0;
};

struct SplitFractions {
  double train = 0.7, validation = 0.2, test = 0.1;
};

inline SplitCounts chrono_split(std::size_t n, SplitFractions fr = {}) {
  if (!(fr.train > 0 && fr.validation > 0 && fr.test > 0) ||
      std::abs(fr.train + fr.validation + fr.test - 1.0) > 1e-9)
    throw DomainError("split fractions must be positive and sum to 1");
  SplitCounts c;
  const double dn = static_cast<double>(n);
  c.train = static_cast<std::size_t>(std::floor(fr.train * dn + 1e-9));
  c.validation = static_cast<std::size_t>(std::floor(fr.validation * dn + 1e-9));
  if (c.train + c.validation > n) throw DomainError("split rounding exceeded row count");
  c.test = n - c.train - c.validation;
  if (c.train == 0 || c.validation == 0 || c.test == 0)
    throw DomainError("chronological split of " + std::to_string(n) + " rows leaves an empty split");
  return c;
}

// Window i covers rows [i, i+chunk_length) and carries the label of its last row.
inline WindowSet make_windows(const Matrix& m, std::span<const int> labels, std::size_t chunk_length) {
  const auto rows = static_cast<std::size_t>(m.rows());
  if (chunk_length < 1) throw DomainError("chunk_length must be >= 1");
  if (labels.size() != rows) throw DomainError("label count does not match row count");
  if (rows < chunk_length)
    throw DomainError("too few rows (" + std::to_string(rows) + ") for chunk_length " + std::to_string(chunk_length));
  WindowSet w;
  w.length = chunk_length;
  w.width = static_cast<std::size_t>(m.cols());
  const std::size_t count = rows - chunk_length + 1;
  w.data.resize(count * chunk_length * w.width);
  w.labels.resize(count);
  float* out = w.data.data();
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t t = 0; t < chunk_length; ++t)
      for (std::size_t c = 0; c < w.width; ++c)
        *out++ = static_cast<float>(m(static_cast<Eigen::Index>(i + t), static_cast<Eigen::Index>(c)));
    w.labels[i] = labels[i + chunk_length - 1];
  }
  return w;
}

// --- bundle -------------------------------------------------------------------

struct Split {
  std::vector<Date> dates;
  Matrix features;
  std::vector<int> labels;

  std::size_t rows() const noexcept { return labels.size(); }
};

enum class SplitKind { Train, Validation, Test };

struct DatasetBundle {
  Split train, validation, test;
  std::size_t horizon = 5;
  bool chunkable = true;
  Normalizer normalizer;
  std::optional<PcaModel> pca;
  std::vector<std::string> source_columns;   // columns fed to the normalizer
  std::vector<std::string> feature_names;    // columns after PCA (if any)

  std::size_t n_features() const noexcept { return feature_names.size(); }

  const Split& split(SplitKind k) const {
    switch (k) {
      case SplitKind::Train: return train;
      case SplitKind::Validation: return validation;
      case SplitKind::Test: return test;
    }
    return train;
  }
};

inline bool is_chronological(const DatasetBundle& b) {
  auto ordered = [](const std::vector<Date>& d) { return std::is_sorted(d.begin(), d.end()); };
  if (!ordered(b.train.dates) || !ordered(b.validation.dates) || !ordered(b.test.dates)) return false;
  if (b.train.dates.empty() || b.validation.dates.empty() || b.test.dates.empty()) return false;
  return b.train.dates.back() < b.validation.dates.front() && b.validation.dates.back() < b.test.dates.front();
}

struct PrepOptions {
  std::size_t horizon = 5;
  std::vector<std::string> drop_manifest;
  // 0 disables PCA; kPcaAuto picks the 95% scree point.
  std::size_t pca_k = 0;
  SplitFractions fractions{};
};

inline constexpr std::size_t kPcaAuto = static_cast<std::size_t>(-1);

inline DatasetBundle prepare_bundle(const RawTable& raw, const PrepOptions& opt) {
  check_table(raw);
  const RawTable table = drop_manifest_features(raw, opt.drop_manifest);
  const auto labels = make_labels(table.target(), opt.horizon);
  const std::size_t n = labels.size();
  const auto counts = chrono_split(n, opt.fractions);

  Matrix all(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(table.names.size()));
  for (std::size_t c = 0; c < table.names.size(); ++c)
    for (std::size_t r = 0; r < n; ++r) all(Eigen::Index(r), Eigen::Index(c)) = table.columns[c][r];

  DatasetBundle b;
  b.horizon = opt.horizon;
  b.source_columns = table.names;
  auto take = [&](std::size_t start, std::size_t count) {
    Split s;
    s.features = all.middleRows(Eigen::Index(start), Eigen::Index(count));
    s.labels.assign(labels.begin() + std::ptrdiff_t(start), labels.begin() + std::ptrdiff_t(start + count));
    s.dates.assign(table.dates.begin() + std::ptrdiff_t(start), table.dates.begin() + std::ptrdiff_t(start + count));
    return s;
  };
  b.train = take(0, counts.train);
  b.validation = take(counts.train, counts.validation);
  b.test = take(counts.train + counts.validation, counts.test);

  b.normalizer = fit_normalizer(b.train.features);
  for (Split* s : {&b.train, &b.validation, &b.test}) s->features = apply_normalizer(b.normalizer, s->features);

  b.feature_names = table.names;
  if (opt.pca_k != 0) {
    const auto max_k = std::min<std::size_t>(b.train.features.rows(), b.train.features.cols());
    std::size_t k = opt.pca_k;
    if (k == kPcaAuto) k = auto_pca_k(pca_fit(b.train.features, max_k).scree());
    b.pca = pca_fit(b.train.features, k);
    for (Split* s : {&b.train, &b.validation, &b.test}) s->features = pca_transform(*b.pca, s->features);
    b.feature_names.clear();
    for (std::size_t i = 0; i < k; ++i) b.feature_names.push_back("pc" + std::to_string(i + 1));
  }
  return b;
}

// --- synthetic data -------------------------------------------------------------

struct SynthSpec {
  std::size_t n_rows = 2000;
  std::size_t n_features = 20;
  std::size_t signal_lag = 3;
  double noise_level = 0.25;
  std::uint64_t seed = 1;
  std::size_t horizon = 5;
};

// Columns: "target" followed by f0..f{n_features-1}, all N(0,1) noise except
// that the target is built from `horizon` interleaved random walks with
//   target[t + h] = target[t] + f0[t - lag] + noise_level * eps[t],
// so the h-day direction at row t is the sign of f0 at row t - lag plus noise.
inline RawTable synth_dataset(const SynthSpec& spec) {
  if (spec.n_features < 1) throw DomainError("synthetic dataset needs at least one feature");
  if (spec.horizon < 1) throw DomainError("synthetic dataset needs horizon >= 1");
  if (spec.n_rows <= spec.signal_lag + spec.horizon)
    throw DomainError("synthetic dataset needs n_rows > signal_lag + horizon");
  if (!(spec.noise_level >= 0.0) || !std::isfinite(spec.noise_level))
    throw DomainError("noise_level must be finite and >= 0");
  Rng rng(hash_combine(spec.seed, tag_hash("synth")));
  const std::size_t n = spec.n_rows, lag = spec.signal_lag, h = spec.horizon;
  RawTable t;
  t.target_name = "target";
  t.names.push_back("target");
  for (std::size_t j = 0; j < spec.n_features; ++j) t.names.push_back("f" + std::to_string(j));
  t.columns.assign(spec.n_features + 1, std::vector<double>(n));
  // f0 history: entries [0, lag) precede row 0.
  std::vector<double> f0(n + lag);
  for (auto& v : f0) v = rng.normal();
  for (std::size_t r = 0; r < n; ++r) t.columns[1][r] = f0[r + lag];
  for (std::size_t j = 1; j < spec.n_features; ++j)
    for (std::size_t r = 0; r < n; ++r) t.columns[j + 1][r] = rng.normal();
  auto& target = t.columns[0];
  for (std::size_t r = 0; r < h; ++r) target[r] = rng.normal();
  for (std::size_t r = 0; r + h < n; ++r) {
    const double eps = rng.normal();
    target[r + h] = target[r] + f0[r] + spec.noise_level * eps;  // f0[r] is feature 0 at row r - lag
  }
  const Date start{std::chrono::year{2000} / std::chrono::January / 3};
  for (std::size_t r = 0; r < n; ++r) t.dates.push_back(start + std::chrono::days{static_cast<int>(r)});
  return t;
}

inline json to_json(const SynthSpec& s) {
  return json{{"n_rows", s.n_rows},     {"n_features", s.n_features}, {"signal_lag", s.signal_lag},
              {"noise_level", s.noise_level}, {"seed", s.seed},     {"horizon", s.horizon}};
}

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.n_rows = j.value("n_rows", s.n_rows);
  s.n_features = j.value("n_features", s.n_features);
  s.signal_lag = j.value("signal_lag", s.signal_lag);
  s.noise_level = j.value("noise_level", s.noise_level);
  s.seed = j.value("seed", s.seed);
  s.horizon = j.value("horizon", s.horizon);
  return s;
}

// --- bundle persistence ------------------------------------------------------------

namespace detail {

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(std::size_t(r)).at(std::size_t(c)).get<double>();
  return m;
}

inline void write_split(const std::filesystem::path& path, const Split& s, const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write '" + path.string() + "'");
  out << "date";
  for (const auto& n : names) out << ',' << n;
  out << ",label\n";
  for (std::size_t r = 0; r < s.rows(); ++r) {
    out << format_date(s.dates[r]);
    for (Eigen::Index c = 0; c < s.features.cols(); ++c) out << ',' << format_number(s.features(Eigen::Index(r), c));
    out << ',' << s.labels[r] << '\n';
  }
}

inline Split read_split(const std::filesystem::path& path, std::size_t n_features) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  Split s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != n_features + 2) throw DomainError("malformed bundle row in '" + path.string() + "'");
    s.dates.push_back(parse_date(cells[0]));
    std::vector<double> row;
    for (std::size_t c = 0; c < n_features; ++c) row.push_back(std::stod(cells[c + 1]));
    rows.push_back(std::move(row));
    s.labels.push_back(std::stoi(cells.back()));
  }
  s.features.resize(Eigen::Index(rows.size()), Eigen::Index(n_features));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < n_features; ++c) s.features(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
  return s;
}

}  // namespace detail

inline void write_bundle(const std::filesystem::path& dir, const DatasetBundle& b) {
  std::filesystem::create_directories(dir);
  json meta{{"horizon", b.horizon},
            {"chunkable", b.chunkable},
            {"source_columns", b.source_columns},
            {"feature_names", b.feature_names},
            {"normalizer", {{"mean", b.normalizer.mean}, {"std", b.normalizer.std}}},
            {"rows", {{"train", b.train.rows()}, {"validation", b.validation.rows()}, {"test", b.test.rows()}}}};
  if (b.pca) {
    std::vector<double> mean(b.pca->mean.data(), b.pca->mean.data() + b.pca->mean.size());
    meta["pca"] = {{"k", b.pca->k},
                   {"mean", mean},
                   {"eigenvalues", b.pca->eigenvalues},
                   {"components", detail::matrix_to_json(b.pca->components)}};
    std::ofstream scree(dir / "scree.csv");
    write_scree_csv(scree, *b.pca);
  } else {
    meta["pca"] = nullptr;
  }
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
  detail::write_split(dir / "train.csv", b.train, b.feature_names);
  detail::write_split(dir / "validation.csv", b.validation, b.feature_names);
  detail::write_split(dir / "test.csv", b.test, b.feature_names);
}

inline DatasetBundle read_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DomainError("dataset bundle '" + dir.string() + "' not found (missing meta.json)");
  try {
    json meta;
    in >> meta;
    DatasetBundle b;
    b.horizon = meta.at("horizon").get<std::size_t>();
    b.chunkable = meta.value("chunkable", true);
    b.source_columns = meta.at("source_columns").get<std::vector<std::string>>();
    b.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
    b.normalizer.mean = meta.at("normalizer").at("mean").get<std::vector<double>>();
    b.normalizer.std = meta.at("normalizer").at("std").get<std::vector<double>>();
    if (!meta.at("pca").is_null()) {
      const auto& p = meta["pca"];
      PcaModel m;
      m.k = p.at("k").get<std::size_t>();
      auto mean = p.at("mean").get<std::vector<double>>();
      m.mean = Eigen::Map<Vector>(mean.data(), Eigen::Index(mean.size()));
      m.eigenvalues = p.at("eigenvalues").get<std::vector<double>>();
      m.components = detail::matrix_from_json(p.at("components"), Eigen::Index(m.k));
      m.explained.resize(Eigen::Index(m.k));
      for (std::size_t i = 0; i < m.k; ++i) m.explained(Eigen::Index(i)) = m.eigenvalues[i];
      b.pca = std::move(m);
    }
    const auto nf = b.feature_names.size();
    b.train = detail::read_split(dir / "train.csv", nf);
    b.validation = detail::read_split(dir / "validation.csv", nf);
    b.test = detail::read_split(dir / "test.csv", nf);
    return b;
  } catch (const json::exception& e) {
    throw DomainError("malformed bundle metadata: " + std::string(e.what()));
  } catch (const std::invalid_argument&) {
    throw DomainError("malformed number in bundle '" + dir.string() + "'");
  }
}

}  // namespace chainsearch
