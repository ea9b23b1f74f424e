#pragma once

// Recurrent controller emitting one token per parameter, trained with
// REINFORCE against a moving-average baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "rng.hpp"
#include "search_space.hpp"

namespace chainsearch::reinforce {

struct ControllerParams {
  std::size_t hidden = 32;
  std::size_t embedding = 16;
  double learning_rate = 5e-3;
  double baseline_decay = 0.8;
  double entropy_weight = 0.0;
  double initial_baseline = 0.5;
  double init_scale = 0.08;
};

inline void check_params(const ControllerParams& p) {
  if (p.hidden < 1 || p.embedding < 1) throw DomainError("controller widths must be >= 1");
  if (!(p.learning_rate > 0.0)) throw DomainError("controller learning rate must be > 0");
  if (!(p.baseline_decay >= 0.0 && p.baseline_decay < 1.0)) throw DomainError("baseline decay must be in [0,1)");
  if (!(p.entropy_weight >= 0.0)) throw DomainError("entropy weight must be >= 0");
}

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Flat parameter vector with named views.
//   start(E), embed_t (w_{t-1} x E) for t >= 1, wx (H x E), wh (H x H), b (H),
//   head_t (w_t x H), head_bias_t (w_t)
struct Layout {
  std::size_t H = 0, E = 0;
  std::vector<std::size_t> widths;
  std::size_t start = 0, wx = 0, wh = 0, b = 0;
  std::vector<std::size_t> embed, head, head_bias;
  std::size_t size = 0;

  Layout() = default;
  Layout(std::vector<std::size_t> w, std::size_t hidden, std::size_t emb) : H(hidden), E(emb), widths(std::move(w)) {
    auto take = [&](std::size_t n) { auto o = size; size += n; return o; };
    start = take(E);
    for (std::size_t t = 1; t < widths.size(); ++t) embed.push_back(take(widths[t - 1] * E));
    wx = take(H * E);
    wh = take(H * H);
    b = take(H);
    for (auto wt : widths) {
      head.push_back(take(wt * H));
      head_bias.push_back(take(wt));
    }
  }
};

struct Adam {
  Vec m, v;
  std::uint64_t step = 0;
};

struct ControllerState {
  ControllerParams params;
  Layout layout;
  Vec theta;
  Adam adam;
  double baseline = 0.5;
  std::uint64_t updates = 0;
  std::uint64_t skipped = 0;

  std::size_t size() const { return layout.size; }
};

inline std::vector<std::size_t> head_widths(const SearchSpace& space) {
  std::vector<std::size_t> w;
  for (const auto& p : space.params) w.push_back(p.grid_size());
  return w;
}

inline ControllerState init_controller(const SearchSpace& space, const ControllerParams& params,
                                       std::uint64_t seed) {
  check_params(params);
  if (space.params.empty()) throw DomainError("controller needs at least one parameter");
  ControllerState s;
  s.params = params;
  s.layout = Layout(head_widths(space), params.hidden, params.embedding);
  s.theta.resize(static_cast<Eigen::Index>(s.layout.size));
  Rng rng(hash_combine(seed, tag_hash("controller-init")));
  for (Eigen::Index i = 0; i < s.theta.size(); ++i) s.theta[i] = rng.uniform(-params.init_scale, params.init_scale);
  s.adam.m = Vec::Zero(s.theta.size());
  s.adam.v = Vec::Zero(s.theta.size());
  s.baseline = params.initial_baseline;
  return s;
}

inline void check_state(const ControllerState& s, const SearchSpace& space) {
  if (s.layout.widths != head_widths(space)) throw DomainError("controller heads do not match the search space");
}

struct Episode {
  std::vector<std::size_t> tokens;
  std::vector<double> log_probs;
  Configuration config;
  double reward = 0.0;

  double log_prob() const {
    double s = 0.0;
    for (double l : log_probs) s += l;
    return s;
  }
};

namespace detail {

using CMap = Eigen::Map<const Mat>;
using CVMap = Eigen::Map<const Vec>;

inline CMap mat(const Vec& th, std::size_t off, std::size_t rows, std::size_t cols) {
  return CMap(th.data() + off, Eigen::Index(rows), Eigen::Index(cols));
}
inline CVMap vec(const Vec& th, std::size_t off, std::size_t n) { return CVMap(th.data() + off, Eigen::Index(n)); }

// Column-major embedding tables: column `token` is that token's embedding.
inline Vec input_at(const Layout& L, const Vec& th, std::size_t t, std::size_t prev_token) {
  if (t == 0) return vec(th, L.start, L.E);
  return mat(th, L.embed[t - 1], L.E, L.widths[t - 1]).col(Eigen::Index(prev_token));
}

inline Vec softmax(const Vec& z) {
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

struct Rollout {
  std::vector<Vec> x, h, p;  // per step: input, hidden, probabilities
};

// Forward pass along a fixed token sequence (sampled when `rng` is given).
inline Rollout forward(const Layout& L, const Vec& th, std::vector<std::size_t>& tokens, Rng* rng) {
  const auto T = L.widths.size();
  Rollout r;
  Vec h = Vec::Zero(Eigen::Index(L.H));
  const auto Wx = mat(th, L.wx, L.H, L.E);
  const auto Wh = mat(th, L.wh, L.H, L.H);
  const auto b = vec(th, L.b, L.H);
  if (rng) tokens.assign(T, 0);
  for (std::size_t t = 0; t < T; ++t) {
    Vec x = input_at(L, th, t, t == 0 ? 0 : tokens[t - 1]);
    h = (Wx * x + Wh * h + b).array().tanh().matrix();
    const auto V = mat(th, L.head[t], L.widths[t], L.H);
    const auto c = vec(th, L.head_bias[t], L.widths[t]);
    Vec p = softmax(V * h + c);
    if (rng) {
      const double u = rng->uniform();
      double acc = 0.0;
      std::size_t k = 0;
      for (; k + 1 < L.widths[t]; ++k) {
        acc += p[Eigen::Index(k)];
        if (u < acc) break;
      }
      tokens[t] = k;
    }
    r.x.push_back(std::move(x));
    r.h.push_back(h);
    r.p.push_back(std::move(p));
  }
  return r;
}

}  // namespace detail

// Per-step probability vectors along `tokens`.
inline std::vector<Vec> step_probabilities(const ControllerState& s, std::vector<std::size_t> tokens) {
  return detail::forward(s.layout, s.theta, tokens, nullptr).p;
}

inline Episode controller_sample(const ControllerState& state, const SearchSpace& space, std::uint64_t seed) {
  check_state(state, space);
  Rng rng(hash_combine(seed, tag_hash("controller-sample")));
  Episode ep;
  const auto r = detail::forward(state.layout, state.theta, ep.tokens, &rng);
  for (std::size_t t = 0; t < ep.tokens.size(); ++t) ep.log_probs.push_back(std::log(r.p[t][Eigen::Index(ep.tokens[t])]));
  ep.config = decode(space, ep.tokens);
  return ep;
}

inline double sequence_log_prob(const Layout& L, const Vec& theta, std::vector<std::size_t> tokens) {
  const auto r = detail::forward(L, theta, tokens, nullptr);
  double s = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) s += std::log(r.p[t][Eigen::Index(tokens[t])]);
  return s;
}

inline double sequence_entropy(const Layout& L, const Vec& theta, std::vector<std::size_t> tokens) {
  const auto r = detail::forward(L, theta, tokens, nullptr);
  double s = 0.0;
  for (const auto& p : r.p) s -= (p.array() * p.array().log()).sum();
  return s;
}

// Gradient of  w_lp * sum_t log pi(token_t) + w_ent * sum_t H(pi_t)  by
// backpropagation through the rollout.
inline Vec objective_gradient(const Layout& L, const Vec& theta, std::vector<std::size_t> tokens, double w_lp,
                              double w_ent) {
  const auto r = detail::forward(L, theta, tokens, nullptr);
  const auto T = tokens.size();
  Vec g = Vec::Zero(theta.size());
  using Map = Eigen::Map<Mat>;
  using VMap = Eigen::Map<Vec>;
  const auto Wx = detail::mat(theta, L.wx, L.H, L.E);
  const auto Wh = detail::mat(theta, L.wh, L.H, L.H);
  Map gWx(g.data() + L.wx, Eigen::Index(L.H), Eigen::Index(L.E));
  Map gWh(g.data() + L.wh, Eigen::Index(L.H), Eigen::Index(L.H));
  VMap gb(g.data() + L.b, Eigen::Index(L.H));
  Vec dh_next = Vec::Zero(Eigen::Index(L.H));
  for (std::size_t t = T; t-- > 0;) {
    const auto& p = r.p[t];
    Vec dz = -w_lp * p;
    dz[Eigen::Index(tokens[t])] += w_lp;
    if (w_ent != 0.0) {
      const Vec logp = p.array().log().matrix();
      const double H = -(p.array() * logp.array()).sum();
      dz += w_ent * (-(p.array() * (logp.array() + H))).matrix();
    }
    const auto V = detail::mat(theta, L.head[t], L.widths[t], L.H);
    Map(g.data() + L.head[t], Eigen::Index(L.widths[t]), Eigen::Index(L.H)) += dz * r.h[t].transpose();
    VMap(g.data() + L.head_bias[t], Eigen::Index(L.widths[t])) += dz;
    Vec dh = V.transpose() * dz + dh_next;
    Vec da = (dh.array() * (1.0 - r.h[t].array().square())).matrix();
    const Vec h_prev = t == 0 ? Vec::Zero(Eigen::Index(L.H)) : r.h[t - 1];
    gWx += da * r.x[t].transpose();
    gWh += da * h_prev.transpose();
    gb += da;
    Vec dx = Wx.transpose() * da;
    if (t == 0) {
      VMap(g.data() + L.start, Eigen::Index(L.E)) += dx;
    } else {
      Map emb(g.data() + L.embed[t - 1], Eigen::Index(L.E), Eigen::Index(L.widths[t - 1]));
      emb.col(Eigen::Index(tokens[t - 1])) += dx;
    }
    dh_next = Wh.transpose() * da;
  }
  return g;
}

inline Vec log_prob_gradient(const ControllerState& s, const std::vector<std::size_t>& tokens) {
  return objective_gradient(s.layout, s.theta, tokens, 1.0, 0.0);
}

enum class UpdateStatus { Applied, ZeroGradient, NonFinite };

inline const char* to_string(UpdateStatus u) {
  switch (u) {
    case UpdateStatus::Applied: return "applied";
    case UpdateStatus::ZeroGradient: return "zero_gradient";
    case UpdateStatus::NonFinite: return "nonfinite_skipped";
  }
  return "?";
}

struct UpdateResult {
  UpdateStatus status = UpdateStatus::Applied;
  double advantage = 0.0;
};

// Gradient ascent on  A * log pi(episode) + entropy_weight * H  with
// A = reward - baseline, followed by the baseline update.
inline UpdateResult controller_update(ControllerState& s, const Episode& ep, double reward) {
  UpdateResult out;
  out.advantage = reward - s.baseline;
  const Vec g = objective_gradient(s.layout, s.theta, ep.tokens, out.advantage, s.params.entropy_weight);
  if (!g.allFinite() || !std::isfinite(reward)) {
    out.status = UpdateStatus::NonFinite;
    ++s.skipped;
    if (std::isfinite(reward)) s.baseline = s.params.baseline_decay * s.baseline + (1.0 - s.params.baseline_decay) * reward;
    return out;
  }
  if (g.isZero(0.0)) {
    out.status = UpdateStatus::ZeroGradient;
  } else {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto& a = s.adam;
    ++a.step;
    a.m = b1 * a.m + (1.0 - b1) * g;
    a.v = b2 * a.v + (1.0 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, double(a.step));
    const double c2 = 1.0 - std::pow(b2, double(a.step));
    s.theta.array() += s.params.learning_rate * (a.m.array() / c1) / ((a.v.array() / c2).sqrt() + eps);
    ++s.updates;
  }
  s.baseline = s.params.baseline_decay * s.baseline + (1.0 - s.params.baseline_decay) * reward;
  return out;
}

}  // namespace chainsearch::reinforce
