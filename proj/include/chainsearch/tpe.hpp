#pragma once

// Tree-structured Parzen Estimator suggestion loop over independent
// per-parameter densities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "search_space.hpp"

namespace chainsearch::tpe {

struct TpeParams {
  std::size_t n_init = 20;
  double gamma = 0.25;
  std::size_t n_candidates = 24;
};

inline void check_params(const TpeParams& p) {
  if (p.n_init < 2) throw DomainError("tpe n_init must be >= 2");
  if (!(p.gamma > 0.0 && p.gamma < 1.0)) throw DomainError("tpe gamma must be in (0,1)");
  if (p.n_candidates < 1) throw DomainError("tpe n_candidates must be >= 1");
}

struct Observation {
  Configuration config;
  double objective = 0.0;
};

struct GoodBad {
  std::vector<std::size_t> good;
  std::vector<std::size_t> bad;
};

// Top ceil(gamma * n) by objective (ties to the earlier index) are good;
// with two or more trials the bad set is never empty.
inline GoodBad split_good_bad(std::span<const double> objectives, double gamma) {
  const std::size_t n = objectives.size();
  GoodBad out;
  if (n == 0) return out;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return objectives[a] > objectives[b]; });
  auto n_good = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-9));
  n_good = std::clamp<std::size_t>(n_good, 1, n > 1 ? n - 1 : 1);
  out.good.assign(order.begin(), order.begin() + std::ptrdiff_t(n_good));
  out.bad.assign(order.begin() + std::ptrdiff_t(n_good), order.end());
  std::sort(out.good.begin(), out.good.end());
  std::sort(out.bad.begin(), out.bad.end());
  return out;
}

inline GoodBad split_good_bad(std::span<const Observation> history, double gamma) {
  std::vector<double> obj;
  obj.reserve(history.size());
  for (const auto& o : history) obj.push_back(o.objective);
  return split_good_bad(obj, gamma);
}

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace detail

// Equally weighted truncated Gaussians on [lo, hi]: one per observation
// plus a wide prior kernel centred on the domain.
struct KernelMixture {
  std::vector<double> centers;
  std::vector<double> widths;
  double lo = 0.0, hi = 1.0;

  double component_mass(std::size_t i, double a, double b) const {
    const double m = centers[i], s = widths[i];
    const double z = detail::normal_cdf((hi - m) / s) - detail::normal_cdf((lo - m) / s);
    return (detail::normal_cdf((b - m) / s) - detail::normal_cdf((a - m) / s)) / z;
  }

  double pdf(double x) const {
    if (x < lo || x > hi) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const double m = centers[i], s = widths[i];
      const double z = detail::normal_cdf((hi - m) / s) - detail::normal_cdf((lo - m) / s);
      sum += detail::normal_pdf((x - m) / s) / (s * z);
    }
    return sum / static_cast<double>(centers.size());
  }

  double mass(double a, double b) const {
    a = std::max(a, lo);
    b = std::min(b, hi);
    if (b <= a) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) sum += component_mass(i, a, b);
    return sum / static_cast<double>(centers.size());
  }

  double sample(Rng& rng) const {
    const auto i = rng.index(centers.size());
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double x = rng.normal(centers[i], widths[i]);
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(centers[i], lo, hi);
  }
};

struct ParamDensity {
  ParamSpec spec;
  KernelMixture numeric;       // numeric kinds, in the internal (log for log-range) domain
  std::vector<double> probs;   // categorical

  // Density for continuous kinds, probability for int steps and choices.
  double likelihood(const ParamValue& v) const {
    switch (spec.kind) {
      case ParamKind::Categorical: return probs[encode_value(spec, v)];
      case ParamKind::IntRange: {
        const double x = static_cast<double>(std::get<std::int64_t>(v));
        const double half = 0.5 * static_cast<double>(spec.step);
        return numeric.mass(x - half, x + half);
      }
      case ParamKind::FloatLogRange: return numeric.pdf(std::log(std::get<double>(v)));
      case ParamKind::FloatRange: return numeric.pdf(std::get<double>(v));
    }
    return 0.0;
  }

  ParamValue sample(Rng& rng) const {
    switch (spec.kind) {
      case ParamKind::Categorical: {
        double u = rng.uniform(), acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          acc += probs[i];
          if (u < acc) return spec.choices[i];
        }
        return spec.choices.back();
      }
      case ParamKind::IntRange: {
        const double x = numeric.sample(rng);
        auto k = static_cast<std::int64_t>(std::llround((x - spec.lo) / static_cast<double>(spec.step)));
        k = std::clamp<std::int64_t>(k, 0, static_cast<std::int64_t>(spec.grid_size()) - 1);
        return spec.ilo() + k * spec.step;
      }
      case ParamKind::FloatLogRange:
        return std::clamp(std::exp(numeric.sample(rng)), spec.lo, spec.hi);
      case ParamKind::FloatRange:
        return std::clamp(numeric.sample(rng), spec.lo, spec.hi);
    }
    return 0.0;
  }
};

struct ParzenModel {
  std::vector<ParamDensity> params;  // space order

  double log_likelihood(const Configuration& c) const {
    double s = 0.0;
    for (const auto& p : params) s += std::log(p.likelihood(c.at(p.spec.name)));
    return s;
  }

  Configuration sample(Rng& rng, const std::string& space_id) const {
    Configuration c;
    c.space_id = space_id;
    for (const auto& p : params) c.values[p.spec.name] = p.sample(rng);
    return c;
  }
};

// Internal numeric domain: log scale for log ranges, half-step padding for ints.
inline std::pair<double, double> internal_domain(const ParamSpec& p) {
  switch (p.kind) {
    case ParamKind::FloatLogRange: return {std::log(p.lo), std::log(p.hi)};
    case ParamKind::IntRange: {
      const double half = 0.5 * static_cast<double>(p.step);
      return {p.lo - half, p.hi + half};
    }
    default: return {p.lo, p.hi};
  }
}

inline double internal_value(const ParamSpec& p, const ParamValue& v) {
  if (p.kind == ParamKind::FloatLogRange) return std::log(std::get<double>(v));
  return numeric_value(p, v);
}

// Bandwidth max(range/sqrt(n), Scott's 1.06*sigma*n^(-1/5)).
inline double bandwidth(std::span<const double> xs, double range) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sigma = xs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  const double scott = 1.06 * sigma * std::pow(n, -0.2);
  return std::max(range / std::sqrt(n), scott);
}

inline ParzenModel fit_parzen(std::span<const Configuration> observations, const SearchSpace& space) {
  if (observations.empty()) throw DomainError("cannot fit a Parzen model to no observations");
  for (const auto& o : observations) validate(space, o);
  ParzenModel model;
  const double n = static_cast<double>(observations.size());
  for (const auto& p : space.params) {
    ParamDensity d;
    d.spec = p;
    if (p.kind == ParamKind::Categorical) {
      std::vector<double> counts(p.choices.size(), 0.0);
      for (const auto& o : observations) counts[encode_value(p, o.at(p.name))] += 1.0;
      const double denom = n + static_cast<double>(p.choices.size());
      for (double c : counts) d.probs.push_back((c + 1.0) / denom);
    } else {
      const auto [lo, hi] = internal_domain(p);
      std::vector<double> xs;
      for (const auto& o : observations) xs.push_back(internal_value(p, o.at(p.name)));
      const double bw = bandwidth(xs, hi - lo);
      d.numeric.lo = lo;
      d.numeric.hi = hi;
      d.numeric.centers = xs;
      d.numeric.widths.assign(xs.size(), bw);
      d.numeric.centers.push_back(0.5 * (lo + hi));
      d.numeric.widths.push_back(hi - lo);
    }
    model.params.push_back(std::move(d));
  }
  return model;
}

inline Configuration suggest(std::span<const Observation> history, const SearchSpace& space, const TpeParams& params,
                             std::uint64_t seed) {
  check_params(params);
  if (history.size() < params.n_init) return sample(space, seed);
  const auto split = split_good_bad(history, params.gamma);
  if (split.good.empty() || split.bad.empty()) return sample(space, seed);
  std::vector<Configuration> good, bad;
  for (auto i : split.good) good.push_back(history[i].config);
  for (auto i : split.bad) bad.push_back(history[i].config);
  const auto l = fit_parzen(good, space);
  const auto g = fit_parzen(bad, space);
  Rng rng(hash_combine(seed, tag_hash("tpe-candidates")));
  Configuration best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < params.n_candidates; ++k) {
    auto cand = l.sample(rng, space.id());
    const double score = l.log_likelihood(cand) - g.log_likelihood(cand);
    if (k == 0 || score > best_score) {
      best_score = score;
      best = std::move(cand);
    }
  }
  return best;
}

}  // namespace chainsearch::tpe
