#pragma once

// Chain-structured hyperparameter spaces: declaration, sampling,
// validation and the integer token encoding used by the controller.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace chainsearch {

using json = nlohmann::json;

// Continuous parameters are discretized into this many buckets for the
// controller and for slice reports.
inline constexpr std::size_t kGridBuckets = 16;

enum class ParamKind { IntRange, FloatLogRange, FloatRange, Categorical };

inline const char* to_string(ParamKind k) {
  switch (k) {
    case ParamKind::IntRange: return "int-range";
    case ParamKind::FloatLogRange: return "float-log-range";
    case ParamKind::FloatRange: return "float-range";
    case ParamKind::Categorical: return "categorical";
  }
  return "?";
}

inline ParamKind param_kind_from_string(const std::string& s) {
  if (s == "int-range") return ParamKind::IntRange;
  if (s == "float-log-range") return ParamKind::FloatLogRange;
  if (s == "float-range") return ParamKind::FloatRange;
  if (s == "categorical") return ParamKind::Categorical;
  throw DomainError("unknown parameter kind '" + s + "'");
}

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::FloatRange;
  double lo = 0.0;
  double hi = 1.0;
  std::int64_t step = 1;  // int-range only
  std::vector<std::string> choices;  // categorical only

  static ParamSpec int_range(std::string name, std::int64_t lo, std::int64_t hi, std::int64_t step = 1) {
    return {std::move(name), ParamKind::IntRange, double(lo), double(hi), step, {}};
  }
  static ParamSpec float_range(std::string name, double lo, double hi) {
    return {std::move(name), ParamKind::FloatRange, lo, hi, 1, {}};
  }
  static ParamSpec log_range(std::string name, double lo, double hi) {
    return {std::move(name), ParamKind::FloatLogRange, lo, hi, 1, {}};
  }
  static ParamSpec categorical(std::string name, std::vector<std::string> choices) {
    return {std::move(name), ParamKind::Categorical, 0.0, 0.0, 1, std::move(choices)};
  }

  bool numeric() const noexcept { return kind != ParamKind::Categorical; }

  std::int64_t ilo() const noexcept { return static_cast<std::int64_t>(lo); }
  std::int64_t ihi() const noexcept { return static_cast<std::int64_t>(hi); }

  // Number of distinct tokens: step grid, choice count, or kGridBuckets.
  std::size_t grid_size() const noexcept {
    switch (kind) {
      case ParamKind::IntRange: return static_cast<std::size_t>((ihi() - ilo()) / step) + 1;
      case ParamKind::Categorical: return choices.size();
      default: return kGridBuckets;
    }
  }

  bool operator==(const ParamSpec&) const = default;
};

using ParamValue = std::variant<std::int64_t, double, std::string>;

enum class ArchKind { Mlp, Cnn1d, Lstm, Surrogate };

inline const char* to_string(ArchKind k) {
  switch (k) {
    case ArchKind::Mlp: return "mlp";
    case ArchKind::Cnn1d: return "cnn1d";
    case ArchKind::Lstm: return "lstm";
    case ArchKind::Surrogate: return "surrogate";
  }
  return "?";
}

inline ArchKind arch_kind_from_string(const std::string& s) {
  if (s == "mlp") return ArchKind::Mlp;
  if (s == "cnn1d") return ArchKind::Cnn1d;
  if (s == "lstm") return ArchKind::Lstm;
  if (s == "surrogate") return ArchKind::Surrogate;
  throw DomainError("unknown arch_kind '" + s + "'");
}

struct SearchSpace {
  ArchKind arch_kind = ArchKind::Surrogate;
  std::vector<ParamSpec> params;
  std::map<std::string, std::int64_t> fixed;

  std::string id() const { return to_string(arch_kind); }

  const ParamSpec* find(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  bool operator==(const SearchSpace&) const = default;
};

// Throws DomainError if the space itself is malformed.
inline void check_space(const SearchSpace& space) {
  std::vector<std::string> errs;
  std::set<std::string> names;
  for (const auto& p : space.params) {
    if (!names.insert(p.name).second) errs.push_back("duplicate parameter '" + p.name + "'");
    switch (p.kind) {
      case ParamKind::IntRange:
        if (p.step < 1) errs.push_back(p.name + ": step must be >= 1");
        if (!(p.lo < p.hi)) errs.push_back(p.name + ": lo must be < hi");
        if (p.lo != std::floor(p.lo) || p.hi != std::floor(p.hi))
          errs.push_back(p.name + ": integer bounds required");
        break;
      case ParamKind::FloatLogRange:
        if (!(p.lo > 0)) errs.push_back(p.name + ": log range needs lo > 0");
        [[fallthrough]];
      case ParamKind::FloatRange:
        if (!(p.lo < p.hi)) errs.push_back(p.name + ": lo must be < hi");
        break;
      case ParamKind::Categorical: {
        if (p.choices.empty()) errs.push_back(p.name + ": empty choice list");
        std::set<std::string> seen(p.choices.begin(), p.choices.end());
        if (seen.size() != p.choices.size()) errs.push_back(p.name + ": duplicate choices");
        break;
      }
    }
  }
  if (space.params.empty()) errs.push_back("search space has no parameters");
  if (!errs.empty()) {
    std::string msg = "invalid search space:";
    for (const auto& e : errs) msg += " [" + e + "]";
    throw DomainError(msg);
  }
}

inline SearchSpace builtin_space(ArchKind kind) {
  SearchSpace s;
  s.arch_kind = kind;
  const auto dropout = ParamSpec::float_range("dropout_rate", 0.0, 0.6);
  const auto lr = ParamSpec::log_range("learning_rate", 1e-5, 1e-2);
  switch (kind) {
    case ArchKind::Mlp:
      s.params = {ParamSpec::int_range("n_hidden_layers", 1, 4, 1),
                  ParamSpec::int_range("units_per_layer", 16, 256, 16), dropout, lr};
      break;
    case ArchKind::Cnn1d:
      s.params = {ParamSpec::int_range("chunk_length", 5, 30, 5),
                  ParamSpec::int_range("kernel_size_1", 2, 7, 1),
                  ParamSpec::int_range("kernel_size_2", 2, 7, 1),
                  ParamSpec::int_range("kernel_size_3", 2, 7, 1),
                  ParamSpec::int_range("n_filters", 4, 64, 4),
                  dropout,
                  lr};
      s.fixed["conv_layers"] = 3;
      break;
    case ArchKind::Lstm:
      s.params = {ParamSpec::int_range("n_stacked_layers", 1, 3, 1),
                  ParamSpec::int_range("hidden_units", 8, 128, 8),
                  ParamSpec::int_range("chunk_length", 5, 30, 5), dropout, lr};
      break;
    case ArchKind::Surrogate:
      s.params = {ParamSpec::float_range("x1", 0.0, 1.0), ParamSpec::log_range("x2", 1e-4, 1.0),
                  ParamSpec::categorical("c", {"a", "b", "c", "d"})};
      break;
  }
  return s;
}

inline SearchSpace builtin_space(const std::string& kind) { return builtin_space(arch_kind_from_string(kind)); }

struct Configuration {
  std::string space_id;
  std::map<std::string, ParamValue> values;

  bool has(const std::string& name) const { return values.count(name) != 0; }

  const ParamValue& at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw DomainError("configuration has no parameter '" + name + "'");
    return it->second;
  }
  std::int64_t get_int(const std::string& name) const {
    const auto& v = at(name);
    if (auto p = std::get_if<std::int64_t>(&v)) return *p;
    throw DomainError("parameter '" + name + "' is not an integer");
  }
  double get_double(const std::string& name) const {
    const auto& v = at(name);
    if (auto p = std::get_if<double>(&v)) return *p;
    if (auto p = std::get_if<std::int64_t>(&v)) return static_cast<double>(*p);
    throw DomainError("parameter '" + name + "' is not numeric");
  }
  const std::string& get_choice(const std::string& name) const {
    const auto& v = at(name);
    if (auto p = std::get_if<std::string>(&v)) return *p;
    throw DomainError("parameter '" + name + "' is not categorical");
  }

  bool operator==(const Configuration&) const = default;
};

// Numeric view of a value: int/float as-is, categorical as choice index.
inline double numeric_value(const ParamSpec& p, const ParamValue& v) {
  if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (auto d = std::get_if<double>(&v)) return *d;
  const auto& s = std::get<std::string>(v);
  auto it = std::find(p.choices.begin(), p.choices.end(), s);
  return static_cast<double>(it - p.choices.begin());
}

inline std::string value_to_string(const ParamValue& v) {
  if (auto i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (auto d = std::get_if<double>(&v)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  return std::get<std::string>(v);
}

// Violations of the configuration against the space (empty if valid).
inline std::vector<std::string> violations(const SearchSpace& space, const Configuration& config) {
  std::vector<std::string> out;
  for (const auto& p : space.params) {
    auto it = config.values.find(p.name);
    if (it == config.values.end()) {
      out.push_back("missing parameter '" + p.name + "'");
      continue;
    }
    const auto& v = it->second;
    switch (p.kind) {
      case ParamKind::IntRange: {
        auto iv = std::get_if<std::int64_t>(&v);
        if (!iv) {
          out.push_back(p.name + ": expected integer");
        } else if (*iv < p.ilo() || *iv > p.ihi()) {
          out.push_back(p.name + ": value " + std::to_string(*iv) + " out of range");
        } else if ((*iv - p.ilo()) % p.step != 0) {
          out.push_back(p.name + ": value " + std::to_string(*iv) + " not aligned to step " +
                        std::to_string(p.step));
        }
        break;
      }
      case ParamKind::FloatRange:
      case ParamKind::FloatLogRange: {
        auto dv = std::get_if<double>(&v);
        if (!dv) {
          out.push_back(p.name + ": expected float");
        } else if (!std::isfinite(*dv) || *dv < p.lo || *dv > p.hi) {
          out.push_back(p.name + ": value " + value_to_string(v) + " out of range");
        }
        break;
      }
      case ParamKind::Categorical: {
        auto sv = std::get_if<std::string>(&v);
        if (!sv) {
          out.push_back(p.name + ": expected choice");
        } else if (std::find(p.choices.begin(), p.choices.end(), *sv) == p.choices.end()) {
          out.push_back(p.name + ": unknown choice '" + *sv + "'");
        }
        break;
      }
    }
  }
  for (const auto& [name, _] : config.values)
    if (!space.contains(name)) out.push_back("unknown parameter '" + name + "'");
  return out;
}

inline void validate(const SearchSpace& space, const Configuration& config) {
  auto v = violations(space, config);
  if (!v.empty()) throw ValidationError(std::move(v));
}

inline ParamValue sample_param(const ParamSpec& p, Rng& rng) {
  switch (p.kind) {
    case ParamKind::IntRange:
      return p.ilo() + p.step * static_cast<std::int64_t>(rng.index(p.grid_size()));
    case ParamKind::FloatRange:
      return std::min(rng.uniform(p.lo, p.hi), p.hi);
    case ParamKind::FloatLogRange:
      return std::clamp(std::exp(rng.uniform(std::log(p.lo), std::log(p.hi))), p.lo, p.hi);
    case ParamKind::Categorical:
      return p.choices[rng.index(p.choices.size())];
  }
  return 0.0;
}

inline Configuration sample(const SearchSpace& space, std::uint64_t seed) {
  Rng rng(hash_combine(seed, tag_hash("sample")));
  Configuration c;
  c.space_id = space.id();
  for (const auto& p : space.params) c.values[p.name] = sample_param(p, rng);
  return c;
}

// Token for one parameter value.
inline std::size_t encode_value(const ParamSpec& p, const ParamValue& v) {
  switch (p.kind) {
    case ParamKind::IntRange:
      return static_cast<std::size_t>((std::get<std::int64_t>(v) - p.ilo()) / p.step);
    case ParamKind::Categorical: {
      const auto& s = std::get<std::string>(v);
      return static_cast<std::size_t>(std::find(p.choices.begin(), p.choices.end(), s) - p.choices.begin());
    }
    case ParamKind::FloatRange:
    case ParamKind::FloatLogRange: {
      const bool lg = p.kind == ParamKind::FloatLogRange;
      const double x = lg ? std::log(std::get<double>(v)) : std::get<double>(v);
      const double lo = lg ? std::log(p.lo) : p.lo;
      const double hi = lg ? std::log(p.hi) : p.hi;
      const double width = (hi - lo) / static_cast<double>(kGridBuckets);
      const auto b = static_cast<std::int64_t>(std::floor((x - lo) / width));
      return static_cast<std::size_t>(std::clamp<std::int64_t>(b, 0, kGridBuckets - 1));
    }
  }
  return 0;
}

// Representative value of a token: the step value, the choice, or the
// bucket midpoint (geometric midpoint for log ranges).
inline ParamValue decode_value(const ParamSpec& p, std::size_t index) {
  if (index >= p.grid_size())
    throw DomainError(p.name + ": token " + std::to_string(index) + " out of range");
  switch (p.kind) {
    case ParamKind::IntRange:
      return p.ilo() + p.step * static_cast<std::int64_t>(index);
    case ParamKind::Categorical:
      return p.choices[index];
    case ParamKind::FloatRange: {
      const double width = (p.hi - p.lo) / static_cast<double>(kGridBuckets);
      return p.lo + (static_cast<double>(index) + 0.5) * width;
    }
    case ParamKind::FloatLogRange: {
      const double lo = std::log(p.lo);
      const double width = (std::log(p.hi) - lo) / static_cast<double>(kGridBuckets);
      return std::exp(lo + (static_cast<double>(index) + 0.5) * width);
    }
  }
  return 0.0;
}

inline std::vector<std::size_t> encode(const SearchSpace& space, const Configuration& config) {
  validate(space, config);
  std::vector<std::size_t> out;
  out.reserve(space.params.size());
  for (const auto& p : space.params) out.push_back(encode_value(p, config.at(p.name)));
  return out;
}

inline Configuration decode(const SearchSpace& space, const std::vector<std::size_t>& indices) {
  if (indices.size() != space.params.size())
    throw DomainError("token count " + std::to_string(indices.size()) + " does not match " +
                      std::to_string(space.params.size()) + " parameters");
  Configuration c;
  c.space_id = space.id();
  for (std::size_t i = 0; i < indices.size(); ++i)
    c.values[space.params[i].name] = decode_value(space.params[i], indices[i]);
  return c;
}

// --- JSON -----------------------------------------------------------------

inline json to_json(const ParamSpec& p) {
  json j{{"name", p.name}, {"kind", to_string(p.kind)}};
  switch (p.kind) {
    case ParamKind::IntRange:
      j["lo"] = p.ilo();
      j["hi"] = p.ihi();
      j["step"] = p.step;
      break;
    case ParamKind::Categorical:
      j["choices"] = p.choices;
      break;
    default:
      j["lo"] = p.lo;
      j["hi"] = p.hi;
  }
  return j;
}

inline ParamSpec param_spec_from_json(const json& j) {
  ParamSpec p;
  p.name = j.at("name").get<std::string>();
  p.kind = param_kind_from_string(j.at("kind").get<std::string>());
  if (p.kind == ParamKind::Categorical) {
    p.choices = j.at("choices").get<std::vector<std::string>>();
    p.lo = p.hi = 0.0;
  } else {
    p.lo = j.at("lo").get<double>();
    p.hi = j.at("hi").get<double>();
    if (p.kind == ParamKind::IntRange) p.step = j.value("step", std::int64_t{1});
  }
  return p;
}

inline json to_json(const SearchSpace& s) {
  json params = json::array();
  for (const auto& p : s.params) params.push_back(to_json(p));
  return json{{"arch_kind", to_string(s.arch_kind)}, {"params", params}, {"fixed", s.fixed}};
}

inline SearchSpace space_from_json(const json& j) {
  try {
    SearchSpace s;
    s.arch_kind = arch_kind_from_string(j.at("arch_kind").get<std::string>());
    for (const auto& pj : j.at("params")) s.params.push_back(param_spec_from_json(pj));
    if (j.contains("fixed")) s.fixed = j.at("fixed").get<std::map<std::string, std::int64_t>>();
    check_space(s);
    return s;
  } catch (const json::exception& e) {
    throw DomainError(std::string("malformed search space JSON: ") + e.what());
  }
}

inline SearchSpace load_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open search space file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DomainError("cannot parse '" + path + "': " + e.what());
  }
  return space_from_json(j);
}

inline json to_json(const Configuration& c) {
  json j = json::object();
  for (const auto& [name, v] : c.values) {
    std::visit([&](const auto& x) { j[name] = x; }, v);
  }
  return j;
}

// Parses values using the space's kinds (JSON numbers are ambiguous).
inline Configuration config_from_json(const SearchSpace& space, const json& j) {
  Configuration c;
  c.space_id = space.id();
  for (const auto& [name, v] : j.items()) {
    const auto* p = space.find(name);
    if (!p) throw DomainError("unknown parameter '" + name + "' in configuration");
    switch (p->kind) {
      case ParamKind::IntRange: c.values[name] = v.get<std::int64_t>(); break;
      case ParamKind::Categorical: c.values[name] = v.get<std::string>(); break;
      default: c.values[name] = v.get<double>(); break;
    }
  }
  validate(space, c);
  return c;
}

}  // namespace chainsearch
