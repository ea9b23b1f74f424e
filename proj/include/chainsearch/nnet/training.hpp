#pragma once

// Weight initialization, mini-batch training with adaptive moment
// estimation, checkpoint/resume, inference and the finite-difference
// gradient check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "../errors.hpp"
#include "../rng.hpp"
#include "../windows.hpp"
#include "model_spec.hpp"
#include "network.hpp"

namespace chainsearch::nnet {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

template <class T>
struct ModelState {
  std::vector<T> weights;
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::uint64_t step = 0;

  bool operator==(const ModelState&) const = default;
};

// Dropout masks and batch order for epoch e are drawn from streams keyed by
// (seed, e), so (seed, epochs_completed) fully captures the random state at
// an epoch boundary.
struct Checkpoint {
  ModelSpec spec;
  ModelState<float> state;
  std::uint32_t epochs_completed = 0;
  std::uint64_t seed = 0;

  bool operator==(const Checkpoint&) const = default;
};

template <class T>
std::vector<T> init_weights(const ModelSpec& spec, std::uint64_t seed) {
  const auto layout = make_layout(spec);
  std::vector<T> w(layout.total, T(0));
  Rng rng(hash_combine(seed, tag_hash("init")));
  for (const auto& bl : layout.blocks) {
    double limit = 0.0;
    switch (bl.init) {
      case InitKind::HeUniform: limit = std::sqrt(6.0 / double(bl.fan_in)); break;
      case InitKind::LecunUniform: limit = std::sqrt(1.0 / double(bl.fan_in)); break;
      case InitKind::Zero: break;
      case InitKind::One: break;
    }
    for (std::size_t i = 0; i < bl.size(); ++i) {
      T& v = w[bl.offset + i];
      if (bl.init == InitKind::One) v = T(1);
      else if (limit > 0) v = static_cast<T>(rng.uniform(-limit, limit));
    }
  }
  // LSTM forget-gate biases start at 1.
  if (spec.arch == ArchKind::Lstm) {
    const std::size_t H = spec.units;
    for (std::size_t l = 0; l < spec.n_layers; ++l) {
      const auto& b = layout.blocks[3 * l + 2];
      for (std::size_t i = H; i < 2 * H; ++i) w[b.offset + i] = T(1);
    }
  }
  return w;
}

inline Checkpoint initial_checkpoint(const ModelSpec& spec, std::uint64_t seed) {
  Checkpoint ck;
  ck.spec = spec;
  ck.seed = seed;
  ck.state.weights = init_weights<float>(spec, seed);
  ck.state.first_moment.assign(ck.state.weights.size(), 0.0f);
  ck.state.second_moment.assign(ck.state.weights.size(), 0.0f);
  return ck;
}

template <class T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

inline void check_windows(const ModelSpec& spec, const WindowSet& data) {
  if (data.count() == 0) throw DomainError("empty training set");
  if (data.length != spec.chunk_length || data.width != spec.n_features)
    throw DomainError("window shape (" + std::to_string(data.length) + "x" + std::to_string(data.width) +
                      ") does not match model input (" + std::to_string(spec.chunk_length) + "x" +
                      std::to_string(spec.n_features) + ")");
  if (data.data.size() != data.count() * data.sample_size()) throw DomainError("window data size mismatch");
}

inline void check_checkpoint(const Checkpoint& ck) {
  const auto n = parameter_count(ck.spec);
  const auto& s = ck.state;
  if (s.weights.size() != n || s.first_moment.size() != n || s.second_moment.size() != n)
    throw CheckpointError("checkpoint parameter blocks do not match the model spec");
  if (!all_finite<float>(s.weights) || !all_finite<float>(s.first_moment) || !all_finite<float>(s.second_moment))
    throw CheckpointError("checkpoint contains non-finite values");
}

namespace detail {

inline void adam_step(ModelState<float>& s, std::span<const float> grad, double lr) {
  ++s.step;
  const double t = static_cast<double>(s.step);
  const auto b1 = static_cast<float>(kAdamBeta1), b2 = static_cast<float>(kAdamBeta2);
  const auto c1 = static_cast<float>(1.0 / (1.0 - std::pow(kAdamBeta1, t)));
  const auto c2 = static_cast<float>(1.0 / (1.0 - std::pow(kAdamBeta2, t)));
  const auto rate = static_cast<float>(lr);
  const auto eps = static_cast<float>(kAdamEps);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const float g = grad[i];
    float& m = s.first_moment[i];
    float& v = s.second_moment[i];
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g * g;
    s.weights[i] -= rate * (m * c1) / (std::sqrt(v * c2) + eps);
  }
}

inline void run_epoch(Network<float>& net, Checkpoint& ck, const WindowSet& data, std::vector<float>& batch_x,
                      std::vector<int>& batch_y, std::vector<float>& grad, std::vector<double>* epoch_losses) {
  const std::uint64_t epoch = ck.epochs_completed;
  const std::size_t n = data.count();
  const std::size_t bs = ck.spec.batch_size;
  const std::size_t sz = data.sample_size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(hash_words(ck.seed, {tag_hash("shuffle"), epoch}));
  shuffle_rng.shuffle(order.begin(), order.end());
  Rng dropout_rng(hash_words(ck.seed, {tag_hash("dropout"), epoch}));
  const Dropout dropout{&dropout_rng, ck.spec.dropout_rate};
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t b = std::min(bs, n - start);
    batch_x.resize(b * sz);
    batch_y.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto src = order[start + i];
      std::copy_n(data.data.data() + src * sz, sz, batch_x.data() + i * sz);
      batch_y[i] = data.labels[src];
    }
    const double loss = net.loss_and_gradient(batch_x.data(), batch_y.data(), b, ck.state.weights, grad, dropout);
    if (!std::isfinite(loss) || !all_finite<float>(grad))
      throw TrainingDivergedError("training diverged at epoch " + std::to_string(epoch + 1));
    adam_step(ck.state, grad, ck.spec.learning_rate);
    loss_sum += loss * static_cast<double>(b);
  }
  if (!all_finite<float>(ck.state.weights))
    throw TrainingDivergedError("non-finite weights after epoch " + std::to_string(epoch + 1));
  ++ck.epochs_completed;
  if (epoch_losses) epoch_losses->push_back(loss_sum / static_cast<double>(n));
}

}  // namespace detail

// Continues training for `extra_epochs`; resume(train(e1), e2) is
// bit-identical to train(e1 + e2).
inline Checkpoint resume(Checkpoint ck, const WindowSet& data, std::size_t extra_epochs,
                         std::vector<double>* epoch_losses = nullptr) {
  check_checkpoint(ck);
  if (extra_epochs == 0) return ck;
  check_windows(ck.spec, data);
  Network<float> net(ck.spec);
  std::vector<float> batch_x, grad(net.parameter_count());
  std::vector<int> batch_y;
  for (std::size_t e = 0; e < extra_epochs; ++e)
    detail::run_epoch(net, ck, data, batch_x, batch_y, grad, epoch_losses);
  return ck;
}

inline Checkpoint train(const ModelSpec& spec, const WindowSet& data, std::size_t epochs, std::uint64_t seed,
                        std::vector<double>* epoch_losses = nullptr) {
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  check_windows(spec, data);
  return resume(initial_checkpoint(spec, seed), data, epochs, epoch_losses);
}

// Sigmoid scores with dropout disabled, clamped into the open interval (0,1).
inline std::vector<double> predict(const Checkpoint& ck, const WindowSet& windows) {
  check_checkpoint(ck);
  if (windows.length != ck.spec.chunk_length || windows.width != ck.spec.n_features)
    throw DomainError("prediction windows do not match model input shape");
  Network<float> net(ck.spec);
  const std::size_t n = windows.count(), sz = windows.sample_size();
  constexpr std::size_t kChunk = 256;
  std::vector<float> logits(kChunk);
  std::vector<double> scores(n);
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t b = std::min(kChunk, n - start);
    net.logits(windows.data.data() + start * sz, b, ck.state.weights, logits.data());
    for (std::size_t i = 0; i < b; ++i)
      scores[start + i] = std::clamp(1.0 / (1.0 + std::exp(-static_cast<double>(logits[i]))), lo, hi);
  }
  return scores;
}

// Max relative error |g_a - g_n| / max(|g_a|, |g_n|, 1e-8) between the
// analytic double-precision gradient and central differences (step 1e-5)
// over every parameter, dropout disabled. The difference quotients use
// extended-precision forward passes so that rounding noise (~1e-11 in
// double) does not swamp parameters whose true gradient is ~1e-7. A stencil
// that straddles a relu or max-pool switch is retried with steps 1e-6 and
// 1e-7; the smallest error over the steps is kept.
inline double grad_check(const ModelSpec& spec, const WindowSet& batch, std::uint64_t seed) {
  check_windows(spec, batch);
  Network<double> net(spec);
  auto w = init_weights<double>(spec, seed);
  // Perturb zero-initialized biases so all code paths carry gradient.
  Rng rng(hash_combine(seed, tag_hash("gradcheck")));
  for (auto& v : w) v += rng.uniform(-0.05, 0.05);
  const std::size_t b = batch.count();
  std::vector<double> x(batch.data.begin(), batch.data.end());
  std::vector<double> analytic(w.size());
  net.loss_and_gradient(x.data(), batch.labels.data(), b, w, analytic);

  using Wide = long double;
  Network<Wide> wide(spec);
  std::vector<Wide> wx(x.begin(), x.end());
  std::vector<Wide> ww(w.begin(), w.end());
  constexpr Wide steps[] = {1e-5L, 1e-6L, 1e-7L};
  constexpr double kRetryAbove = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < ww.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const Wide h : steps) {
      const Wide saved = ww[i];
      ww[i] = saved + h;
      const Wide up = wide.loss(wx.data(), batch.labels.data(), b, ww);
      ww[i] = saved - h;
      const Wide down = wide.loss(wx.data(), batch.labels.data(), b, ww);
      ww[i] = saved;
      const double numeric = static_cast<double>((up - down) / (2 * h));
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      best = std::min(best, std::abs(analytic[i] - numeric) / denom);
      if (best <= kRetryAbove) break;
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace chainsearch::nnet
