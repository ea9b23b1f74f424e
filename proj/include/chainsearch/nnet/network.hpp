#pragma once

// Forward and backward passes for the three architectures. Gradients are
// derived by hand; grad_check() in training.hpp verifies them against
// finite differences.

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "../rng.hpp"
#include "model_spec.hpp"

namespace chainsearch::nnet {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const Mat<T>>;
template <class T>
using MutMap = Eigen::Map<Mat<T>>;
template <class T>
using ConstRowMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <class T>
using MutRowMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

// Inverted dropout: kept units are scaled by 1/(1-rate) while training.
struct Dropout {
  Rng* rng = nullptr;
  double rate = 0.0;
  bool active() const noexcept { return rng != nullptr && rate > 0.0; }
};

template <class T>
void draw_mask(Mat<T>& mask, Eigen::Index rows, Eigen::Index cols, const Dropout& d) {
  mask.resize(rows, cols);
  const T scale = static_cast<T>(1.0 / (1.0 - d.rate));
  T* m = mask.data();
  for (Eigen::Index i = 0; i < rows * cols; ++i) m[i] = d.rng->uniform() < d.rate ? T(0) : scale;
}

// log(1 + e^-|z|) + max(z, 0) - z*y
template <class R>
R bce_from_logit(R z, int y) {
  return std::max(z, R(0)) - z * static_cast<R>(y) + std::log1p(std::exp(-std::abs(z)));
}

template <class T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

template <class T>
class Network {
public:
  explicit Network(const ModelSpec& spec) : spec_(spec), layout_(make_layout(spec)) {}

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t parameter_count() const noexcept { return layout_.total; }
  std::size_t input_size() const noexcept { return spec_.chunk_length * spec_.n_features; }

  // Writes one logit per sample. `x` holds `batch` samples of input_size().
  void logits(const T* x, std::size_t batch, std::span<const T> params, T* out, Dropout d = {}) {
    forward(x, batch, params.data(), d);
    for (std::size_t b = 0; b < batch; ++b) out[b] = logits_(Eigen::Index(b), 0);
  }

  // Mean binary cross-entropy over the batch, accumulated in T.
  T loss(const T* x, const int* y, std::size_t batch, std::span<const T> params) {
    forward(x, batch, params.data(), Dropout{});
    T sum = 0;
    for (std::size_t b = 0; b < batch; ++b) sum += bce_from_logit<T>(logits_(Eigen::Index(b), 0), y[b]);
    return sum / static_cast<T>(batch);
  }

  // Mean binary cross-entropy over the batch; `grad` receives its gradient.
  double loss_and_gradient(const T* x, const int* y, std::size_t batch, std::span<const T> params,
                           std::span<T> grad, Dropout d = {}) {
    forward(x, batch, params.data(), d);
    const auto B = static_cast<Eigen::Index>(batch);
    dlogits_.resize(B, 1);
    double loss = 0.0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const T z = logits_(b, 0);
      loss += bce_from_logit<double>(static_cast<double>(z), y[b]);
      dlogits_(b, 0) = (sigmoid(z) - static_cast<T>(y[b])) / static_cast<T>(batch);
    }
    std::fill(grad.begin(), grad.end(), T(0));
    backward(batch, params.data(), grad.data());
    return loss / static_cast<double>(batch);
  }

private:
  ConstMap<T> pmap(const T* p, std::size_t block) const {
    const auto& bl = layout_.blocks[block];
    return ConstMap<T>(p + bl.offset, Eigen::Index(bl.rows), Eigen::Index(bl.cols));
  }
  MutMap<T> gmap(T* g, std::size_t block) const {
    const auto& bl = layout_.blocks[block];
    return MutMap<T>(g + bl.offset, Eigen::Index(bl.rows), Eigen::Index(bl.cols));
  }
  ConstRowMap<T> prow(const T* p, std::size_t block) const {
    const auto& bl = layout_.blocks[block];
    return ConstRowMap<T>(p + bl.offset, Eigen::Index(bl.size()));
  }
  MutRowMap<T> grow(T* g, std::size_t block) const {
    const auto& bl = layout_.blocks[block];
    return MutRowMap<T>(g + bl.offset, Eigen::Index(bl.size()));
  }

  void forward(const T* x, std::size_t batch, const T* p, const Dropout& d) {
    dropout_on_ = d.active();
    switch (spec_.arch) {
      case ArchKind::Mlp: forward_mlp(x, batch, p, d); break;
      case ArchKind::Cnn1d: forward_cnn(x, batch, p, d); break;
      case ArchKind::Lstm: forward_lstm(x, batch, p, d); break;
      case ArchKind::Surrogate: break;
    }
  }

  void backward(std::size_t batch, const T* p, T* g) {
    switch (spec_.arch) {
      case ArchKind::Mlp: backward_mlp(batch, p, g); break;
      case ArchKind::Cnn1d: backward_cnn(batch, p, g); break;
      case ArchKind::Lstm: backward_lstm(batch, p, g); break;
      case ArchKind::Surrogate: break;
    }
  }

  // --- mlp: [dense -> relu -> dropout] x n -> dense(1) -----------------------

  void forward_mlp(const T* x, std::size_t batch, const T* p, const Dropout& d) {
    const auto B = Eigen::Index(batch);
    const std::size_t L = spec_.n_layers;
    input_ = ConstMap<T>(x, B, Eigen::Index(spec_.n_features));
    z_.resize(L);
    a_.resize(L);
    mask_.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      const Mat<T>& in = l == 0 ? input_ : a_[l - 1];
      z_[l].noalias() = in * pmap(p, 2 * l);
      z_[l].rowwise() += prow(p, 2 * l + 1);
      a_[l] = z_[l].cwiseMax(T(0));
      if (dropout_on_) {
        draw_mask(mask_[l], B, a_[l].cols(), d);
        a_[l].array() *= mask_[l].array();
      }
    }
    logits_.noalias() = a_[L - 1] * pmap(p, 2 * L);
    logits_.array() += p[layout_.blocks[2 * L + 1].offset];
  }

  void backward_mlp(std::size_t, const T* p, T* g) {
    const std::size_t L = spec_.n_layers;
    gmap(g, 2 * L).noalias() = a_[L - 1].transpose() * dlogits_;
    g[layout_.blocks[2 * L + 1].offset] = dlogits_.sum();
    da_.noalias() = dlogits_ * pmap(p, 2 * L).transpose();
    for (std::size_t l = L; l-- > 0;) {
      if (dropout_on_) da_.array() *= mask_[l].array();
      dz_ = (z_[l].array() > T(0)).select(da_.array(), T(0)).matrix();
      const Mat<T>& in = l == 0 ? input_ : a_[l - 1];
      gmap(g, 2 * l).noalias() = in.transpose() * dz_;
      grow(g, 2 * l + 1) = dz_.colwise().sum();
      if (l > 0) da_.noalias() = dz_ * pmap(p, 2 * l).transpose();
    }
  }

  // --- cnn1d: [conv -> relu -> maxpool(2) -> dropout] x 3 -> flatten -> dense(1)

  void forward_cnn(const T* x, std::size_t batch, const T* p, const Dropout& d) {
    const auto B = Eigen::Index(batch);
    const auto shape = conv_shape(spec_);
    const auto Cf = Eigen::Index(spec_.units);
    input_ = ConstMap<T>(x, B * Eigen::Index(spec_.chunk_length), Eigen::Index(spec_.n_features));
    col_.resize(kConvLayers);
    z_.resize(kConvLayers);
    a_.resize(kConvLayers);
    mask_.resize(kConvLayers);
    pool_arg_.resize(kConvLayers);
    Eigen::Index lin = Eigen::Index(spec_.chunk_length);
    for (std::size_t j = 0; j < kConvLayers; ++j) {
      const Mat<T>& in = j == 0 ? input_ : a_[j - 1];
      const Eigen::Index cin = in.cols();
      const auto k = Eigen::Index(spec_.kernels[j]);
      const auto lc = Eigen::Index(shape.conv_len[j]);
      const auto lp = Eigen::Index(shape.pooled_len[j]);
      auto& col = col_[j];
      col.resize(B * lc, k * cin);
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index t = 0; t < lc; ++t)
          std::memcpy(col.data() + (b * lc + t) * k * cin, in.data() + (b * lin + t) * cin,
                      sizeof(T) * std::size_t(k * cin));
      z_[j].noalias() = col * pmap(p, 2 * j);
      z_[j].rowwise() += prow(p, 2 * j + 1);
      auto& out = a_[j];
      auto& arg = pool_arg_[j];
      out.resize(B * lp, Cf);
      arg.assign(std::size_t(B * lp * Cf), 0);
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index t = 0; t < lp; ++t)
          for (Eigen::Index o = 0; o < Cf; ++o) {
            const T first = z_[j](b * lc + 2 * t, o);
            const T second = z_[j](b * lc + 2 * t + 1, o);
            const bool pick_second = second > first;
            arg[std::size_t((b * lp + t) * Cf + o)] = pick_second ? 1 : 0;
            out(b * lp + t, o) = std::max(pick_second ? second : first, T(0));
          }
      if (dropout_on_) {
        draw_mask(mask_[j], out.rows(), out.cols(), d);
        out.array() *= mask_[j].array();
      }
      lin = lp;
    }
    const auto flat = lin * Cf;
    logits_.noalias() =
        ConstMap<T>(a_[kConvLayers - 1].data(), B, flat) * pmap(p, 2 * kConvLayers);
    logits_.array() += p[layout_.blocks[2 * kConvLayers + 1].offset];
  }

  void backward_cnn(std::size_t batch, const T* p, T* g) {
    const auto B = Eigen::Index(batch);
    const auto shape = conv_shape(spec_);
    const auto Cf = Eigen::Index(spec_.units);
    const auto top = kConvLayers - 1;
    const auto lp_top = Eigen::Index(shape.pooled_len[top]);
    gmap(g, 2 * kConvLayers).noalias() =
        ConstMap<T>(a_[top].data(), B, lp_top * Cf).transpose() * dlogits_;
    g[layout_.blocks[2 * kConvLayers + 1].offset] = dlogits_.sum();
    Mat<T> dflat = dlogits_ * pmap(p, 2 * kConvLayers).transpose();
    da_ = MutMap<T>(dflat.data(), B * lp_top, Cf);
    for (std::size_t j = kConvLayers; j-- > 0;) {
      if (dropout_on_) da_.array() *= mask_[j].array();
      const auto k = Eigen::Index(spec_.kernels[j]);
      const auto lc = Eigen::Index(shape.conv_len[j]);
      const auto lp = Eigen::Index(shape.pooled_len[j]);
      const auto& arg = pool_arg_[j];
      dz_.setZero(B * lc, Cf);
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index t = 0; t < lp; ++t)
          for (Eigen::Index o = 0; o < Cf; ++o) {
            const Eigen::Index src = b * lc + 2 * t + arg[std::size_t((b * lp + t) * Cf + o)];
            if (z_[j](src, o) > T(0)) dz_(src, o) = da_(b * lp + t, o);
          }
      gmap(g, 2 * j).noalias() = col_[j].transpose() * dz_;
      grow(g, 2 * j + 1) = dz_.colwise().sum();
      if (j == 0) break;
      const Eigen::Index cin = a_[j - 1].cols();
      const Eigen::Index lin = Eigen::Index(shape.pooled_len[j - 1]);
      dcol_.noalias() = dz_ * pmap(p, 2 * j).transpose();
      da_.setZero(B * lin, cin);
      for (Eigen::Index b = 0; b < B; ++b)
        for (Eigen::Index t = 0; t < lc; ++t) {
          T* dst = da_.data() + (b * lin + t) * cin;
          const T* src = dcol_.data() + (b * lc + t) * k * cin;
          for (Eigen::Index q = 0; q < k * cin; ++q) dst[q] += src[q];
        }
    }
  }

  // --- lstm: stacked layers, dropout after each, last hidden state -> dense(1)
  // Sequences are stored time-major: row t*B + b.

  void forward_lstm(const T* x, std::size_t batch, const T* p, const Dropout& d) {
    const auto B = Eigen::Index(batch);
    const auto L = Eigen::Index(spec_.chunk_length);
    const auto F = Eigen::Index(spec_.n_features);
    const auto H = Eigen::Index(spec_.units);
    const std::size_t N = spec_.n_layers;
    seq_in_.resize(N);
    gates_.resize(N);
    cell_.resize(N);
    tcell_.resize(N);
    hid_.resize(N);
    mask_.resize(N);
    auto& x0 = seq_in_[0];
    x0.resize(L * B, F);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < L; ++t)
        std::memcpy(x0.data() + (t * B + b) * F, x + (b * L + t) * F, sizeof(T) * std::size_t(F));
    for (std::size_t l = 0; l < N; ++l) {
      const auto wx = pmap(p, 3 * l);
      const auto wh = pmap(p, 3 * l + 1);
      auto& G = gates_[l];
      auto& C = cell_[l];
      auto& TC = tcell_[l];
      auto& Hs = hid_[l];
      G.noalias() = seq_in_[l] * wx;
      G.rowwise() += prow(p, 3 * l + 2);
      C.resize(L * B, H);
      TC.resize(L * B, H);
      Hs.resize(L * B, H);
      for (Eigen::Index t = 0; t < L; ++t) {
        auto g = G.middleRows(t * B, B);
        if (t > 0) g.noalias() += Hs.middleRows((t - 1) * B, B) * wh;
        g.leftCols(2 * H).array() = (T(1) + (-g.leftCols(2 * H).array()).exp()).inverse();
        g.middleCols(2 * H, H).array() = g.middleCols(2 * H, H).array().tanh();
        g.rightCols(H).array() = (T(1) + (-g.rightCols(H).array()).exp()).inverse();
        auto c = C.middleRows(t * B, B);
        c.array() = g.leftCols(H).array() * g.middleCols(2 * H, H).array();
        if (t > 0) c.array() += g.middleCols(H, H).array() * C.middleRows((t - 1) * B, B).array();
        TC.middleRows(t * B, B).array() = c.array().tanh();
        Hs.middleRows(t * B, B).array() = g.rightCols(H).array() * TC.middleRows(t * B, B).array();
      }
      if (l + 1 < N) {
        seq_in_[l + 1] = Hs;
        if (dropout_on_) {
          draw_mask(mask_[l], L * B, H, d);
          seq_in_[l + 1].array() *= mask_[l].array();
        }
      } else {
        final_ = Hs.middleRows((L - 1) * B, B);
        if (dropout_on_) {
          draw_mask(mask_[l], B, H, d);
          final_.array() *= mask_[l].array();
        }
      }
    }
    logits_.noalias() = final_ * pmap(p, 3 * N);
    logits_.array() += p[layout_.blocks[3 * N + 1].offset];
  }

  void backward_lstm(std::size_t batch, const T* p, T* g) {
    const auto B = Eigen::Index(batch);
    const auto L = Eigen::Index(spec_.chunk_length);
    const auto H = Eigen::Index(spec_.units);
    const std::size_t N = spec_.n_layers;
    gmap(g, 3 * N).noalias() = final_.transpose() * dlogits_;
    g[layout_.blocks[3 * N + 1].offset] = dlogits_.sum();
    Mat<T> dfinal = dlogits_ * pmap(p, 3 * N).transpose();
    if (dropout_on_) dfinal.array() *= mask_[N - 1].array();
    da_.setZero(L * B, H);  // gradient w.r.t. the layer's output sequence
    da_.middleRows((L - 1) * B, B) = dfinal;
    Mat<T> dh_next(B, H), dc_next(B, H), dh(B, H), dc(B, H);
    for (std::size_t l = N; l-- > 0;) {
      const auto wx = pmap(p, 3 * l);
      const auto wh = pmap(p, 3 * l + 1);
      auto gwh = gmap(g, 3 * l + 1);
      const auto& G = gates_[l];
      const auto& C = cell_[l];
      const auto& TC = tcell_[l];
      const auto& Hs = hid_[l];
      dz_.resize(L * B, 4 * H);  // gate pre-activation gradients
      dh_next.setZero();
      dc_next.setZero();
      for (Eigen::Index t = L; t-- > 0;) {
        const auto gi = G.middleRows(t * B, B).leftCols(H).array();
        const auto gf = G.middleRows(t * B, B).middleCols(H, H).array();
        const auto gg = G.middleRows(t * B, B).middleCols(2 * H, H).array();
        const auto go = G.middleRows(t * B, B).rightCols(H).array();
        const auto tc = TC.middleRows(t * B, B).array();
        dh.array() = da_.middleRows(t * B, B).array() + dh_next.array();
        dc.array() = dh.array() * go * (T(1) - tc * tc) + dc_next.array();
        auto dG = dz_.middleRows(t * B, B);
        dG.leftCols(H).array() = dc.array() * gg * gi * (T(1) - gi);
        if (t > 0)
          dG.middleCols(H, H).array() = dc.array() * C.middleRows((t - 1) * B, B).array() * gf * (T(1) - gf);
        else
          dG.middleCols(H, H).setZero();
        dG.middleCols(2 * H, H).array() = dc.array() * gi * (T(1) - gg * gg);
        dG.rightCols(H).array() = dh.array() * tc * go * (T(1) - go);
        dc_next.array() = dc.array() * gf;
        if (t > 0) {
          gwh.noalias() += Hs.middleRows((t - 1) * B, B).transpose() * dG;
          dh_next.noalias() = dG * wh.transpose();
        }
      }
      gmap(g, 3 * l).noalias() = seq_in_[l].transpose() * dz_;
      grow(g, 3 * l + 2) = dz_.colwise().sum();
      if (l > 0) {
        da_.noalias() = dz_ * wx.transpose();
        if (dropout_on_) da_.array() *= mask_[l - 1].array();
      }
    }
  }

  ModelSpec spec_;
  ParamLayout layout_;
  bool dropout_on_ = false;

  Mat<T> input_, logits_, dlogits_, da_, dz_, dcol_, final_;
  std::vector<Mat<T>> z_, a_, mask_, col_;
  std::vector<std::vector<unsigned char>> pool_arg_;
  std::vector<Mat<T>> seq_in_, gates_, cell_, tcell_, hid_;
};

}  // namespace chainsearch::nnet
