#pragma once

#include <memory>
#include <span>
#include <vector>

#include "clem/rng.hpp"
#include "clem/tape.hpp"

namespace clem {

/// Gate order inside the stacked weight matrices: input, forget, candidate,
/// output (rows [0,H), [H,2H), [2H,3H), [3H,4H)). Fixed for serialization.
template <class T = float>
struct LstmParams {
  int d = 0, H = 0;
  Value<T> Wx;  // 4H x d
  Value<T> Wh;  // 4H x H
  Value<T> b;   // 4H

  static LstmParams make(int d, int H) {
    LstmParams p;
    p.d = d;
    p.H = H;
    p.Wx.set(Tensor<T>({4 * H, d}));
    p.Wh.set(Tensor<T>({4 * H, H}));
    p.b.set(Tensor<T>({4 * H}));
    return p;
  }

  /// Weights U(-0.08, 0.08); forget-gate bias 1.0, other biases 0.
  void init(Rng& rng) {
    for (auto& x : Wx.val.v) x = static_cast<T>(rng.uniform(-0.08, 0.08));
    for (auto& x : Wh.val.v) x = static_cast<T>(rng.uniform(-0.08, 0.08));
    b.val.zero();
    for (int i = H; i < 2 * H; ++i) b.val.at(i) = T(1);
  }

  std::vector<Value<T>*> params() { return {&Wx, &Wh, &b}; }

  template <class U>
  LstmParams<U> cast() const {
    LstmParams<U> out;
    out.d = d;
    out.H = H;
    out.Wx.set(Wx.val.template cast<U>());
    out.Wh.set(Wh.val.template cast<U>());
    out.b.set(b.val.template cast<U>());
    return out;
  }
};

template <class T = float>
struct RnnParams {
  int d = 0, H = 0;
  Value<T> W;  // H x (d+H)
  Value<T> b;  // H

  static RnnParams make(int d, int H) {
    RnnParams p;
    p.d = d;
    p.H = H;
    p.W.set(Tensor<T>({H, d + H}));
    p.b.set(Tensor<T>({H}));
    return p;
  }

  void init(Rng& rng) {
    for (auto& x : W.val.v) x = static_cast<T>(rng.uniform(-0.08, 0.08));
    b.val.zero();
  }

  std::vector<Value<T>*> params() { return {&W, &b}; }

  template <class U>
  RnnParams<U> cast() const {
    RnnParams<U> out;
    out.d = d;
    out.H = H;
    out.W.set(W.val.template cast<U>());
    out.b.set(b.val.template cast<U>());
    return out;
  }
};

template <class T = float>
struct HeadParams {
  int H = 0, C = 0;
  Value<T> W;  // C x H
  Value<T> b;  // C

  static HeadParams make(int H, int C) {
    HeadParams p;
    p.H = H;
    p.C = C;
    p.W.set(Tensor<T>({C, H}));
    p.b.set(Tensor<T>({C}));
    return p;
  }

  void init(Rng& rng) {
    for (auto& x : W.val.v) x = static_cast<T>(rng.uniform(-0.08, 0.08));
    b.val.zero();
  }

  std::vector<Value<T>*> params() { return {&W, &b}; }

  template <class U>
  HeadParams<U> cast() const {
    HeadParams<U> out;
    out.H = H;
    out.C = C;
    out.W.set(W.val.template cast<U>());
    out.b.set(b.val.template cast<U>());
    return out;
  }
};

template <class T>
struct StepState {
  Value<T>* h = nullptr;
  Value<T>* c = nullptr;
};

namespace detail {

template <class T>
struct LstmCache {
  // per batch row: i, f, g, o, tanh(c')
  Tensor<T> i, f, g, o, tc;
};

}  // namespace detail

/// One batched LSTM timestep as a fused tape node. mask[r]==0 rows (PAD)
/// carry (h, c) through unchanged and contribute no gradient to x or weights.
template <class T>
StepState<T> lstm_step(Tape<T>& tape, LstmParams<T>& P, Value<T>* x, Value<T>* h_prev,
                       Value<T>* c_prev, std::span<const uint8_t> mask) {
  const int B = x->val.shape[0];
  const int d = P.d, H = P.H;
  require_shape(x->val.shape[1] == d, "lstm_step: input width");
  require_shape(h_prev->val.shape[0] == B && h_prev->val.shape[1] == H, "lstm_step: h");
  require_shape(c_prev->val.shape[0] == B && c_prev->val.shape[1] == H, "lstm_step: c");

  auto cache = std::make_shared<detail::LstmCache<T>>();
  cache->i = Tensor<T>({B, H});
  cache->f = Tensor<T>({B, H});
  cache->g = Tensor<T>({B, H});
  cache->o = Tensor<T>({B, H});
  cache->tc = Tensor<T>({B, H});

  Tensor<T> h_new({B, H}), c_new({B, H});
  std::vector<T> z(static_cast<size_t>(4) * H);
  for (int r = 0; r < B; ++r) {
    if (!mask[static_cast<size_t>(r)]) {
      std::copy(h_prev->val.row(r), h_prev->val.row(r) + H, h_new.row(r));
      std::copy(c_prev->val.row(r), c_prev->val.row(r) + H, c_new.row(r));
      continue;
    }
    const T* xr = x->val.row(r);
    const T* hr = h_prev->val.row(r);
    for (int i = 0; i < 4 * H; ++i) {
      double acc = static_cast<double>(P.b.val.at(i));
      const T* wx = P.Wx.val.row(i);
      for (int j = 0; j < d; ++j) acc += static_cast<double>(wx[j]) * xr[j];
      const T* wh = P.Wh.val.row(i);
      for (int j = 0; j < H; ++j) acc += static_cast<double>(wh[j]) * hr[j];
      z[static_cast<size_t>(i)] = static_cast<T>(acc);
    }
    for (int j = 0; j < H; ++j) {
      const T i_g = sigmoid_scalar(z[static_cast<size_t>(j)]);
      const T f_g = sigmoid_scalar(z[static_cast<size_t>(H + j)]);
      const T g_g = static_cast<T>(std::tanh(static_cast<double>(z[static_cast<size_t>(2 * H + j)])));
      const T o_g = sigmoid_scalar(z[static_cast<size_t>(3 * H + j)]);
      const T c2 = f_g * c_prev->val.at(r, j) + i_g * g_g;
      const T tc = static_cast<T>(std::tanh(static_cast<double>(c2)));
      cache->i.at(r, j) = i_g;
      cache->f.at(r, j) = f_g;
      cache->g.at(r, j) = g_g;
      cache->o.at(r, j) = o_g;
      cache->tc.at(r, j) = tc;
      c_new.at(r, j) = c2;
      h_new.at(r, j) = o_g * tc;
    }
  }

  Value<T>* h = tape.make(std::move(h_new));
  Value<T>* c = tape.make(std::move(c_new));
  std::vector<uint8_t> msk(mask.begin(), mask.end());
  LstmParams<T>* PP = &P;
  tape.record([=, msk = std::move(msk)]() {
    const int Bc = B, Hc = H, dc = d;
    std::vector<T> dz(static_cast<size_t>(4) * Hc);
    for (int r = 0; r < Bc; ++r) {
      const T* dh = h->grad.row(r);
      const T* dcn = c->grad.row(r);
      if (!msk[static_cast<size_t>(r)]) {
        for (int j = 0; j < Hc; ++j) {
          h_prev->grad.at(r, j) += dh[j];
          c_prev->grad.at(r, j) += dcn[j];
        }
        continue;
      }
      for (int j = 0; j < Hc; ++j) {
        const T i_g = cache->i.at(r, j), f_g = cache->f.at(r, j);
        const T g_g = cache->g.at(r, j), o_g = cache->o.at(r, j);
        const T tc = cache->tc.at(r, j);
        const T dc2 = dcn[j] + dh[j] * o_g * (T(1) - tc * tc);
        dz[static_cast<size_t>(j)] = dc2 * g_g * i_g * (T(1) - i_g);            // input gate
        dz[static_cast<size_t>(Hc + j)] =
            dc2 * c_prev->val.at(r, j) * f_g * (T(1) - f_g);                    // forget gate
        dz[static_cast<size_t>(2 * Hc + j)] = dc2 * i_g * (T(1) - g_g * g_g);   // candidate
        dz[static_cast<size_t>(3 * Hc + j)] = dh[j] * tc * o_g * (T(1) - o_g);  // output gate
        c_prev->grad.at(r, j) += dc2 * f_g;
      }
      const T* xr = x->val.row(r);
      const T* hr = h_prev->val.row(r);
      T* dx = x->grad.row(r);
      T* dhp = h_prev->grad.row(r);
      for (int i = 0; i < 4 * Hc; ++i) {
        const T gz = dz[static_cast<size_t>(i)];
        if (gz == T(0)) continue;
        T* gwx = PP->Wx.grad.row(i);
        const T* wx = PP->Wx.val.row(i);
        for (int j = 0; j < dc; ++j) {
          gwx[j] += gz * xr[j];
          dx[j] += gz * wx[j];
        }
        T* gwh = PP->Wh.grad.row(i);
        const T* wh = PP->Wh.val.row(i);
        for (int j = 0; j < Hc; ++j) {
          gwh[j] += gz * hr[j];
          dhp[j] += gz * wh[j];
        }
        PP->b.grad.at(i) += gz;
      }
    }
  });
  return {h, c};
}

/// One batched Elman RNN timestep: h' = tanh(W [x; h] + b), same mask contract.
template <class T>
Value<T>* rnn_step(Tape<T>& tape, RnnParams<T>& P, Value<T>* x, Value<T>* h_prev,
                   std::span<const uint8_t> mask) {
  const int B = x->val.shape[0];
  const int d = P.d, H = P.H;
  require_shape(x->val.shape[1] == d, "rnn_step: input width");

  Tensor<T> h_new({B, H});
  for (int r = 0; r < B; ++r) {
    if (!mask[static_cast<size_t>(r)]) {
      std::copy(h_prev->val.row(r), h_prev->val.row(r) + H, h_new.row(r));
      continue;
    }
    const T* xr = x->val.row(r);
    const T* hr = h_prev->val.row(r);
    for (int i = 0; i < H; ++i) {
      double acc = static_cast<double>(P.b.val.at(i));
      const T* w = P.W.val.row(i);
      for (int j = 0; j < d; ++j) acc += static_cast<double>(w[j]) * xr[j];
      for (int j = 0; j < H; ++j) acc += static_cast<double>(w[d + j]) * hr[j];
      h_new.at(r, i) = static_cast<T>(std::tanh(acc));
    }
  }
  Value<T>* h = tape.make(std::move(h_new));
  std::vector<uint8_t> msk(mask.begin(), mask.end());
  RnnParams<T>* PP = &P;
  tape.record([=, msk = std::move(msk)]() {
    for (int r = 0; r < B; ++r) {
      const T* dh = h->grad.row(r);
      if (!msk[static_cast<size_t>(r)]) {
        for (int j = 0; j < H; ++j) h_prev->grad.at(r, j) += dh[j];
        continue;
      }
      const T* xr = x->val.row(r);
      const T* hr = h_prev->val.row(r);
      T* dx = x->grad.row(r);
      T* dhp = h_prev->grad.row(r);
      for (int i = 0; i < H; ++i) {
        const T hv = h->val.at(r, i);
        const T gz = dh[i] * (T(1) - hv * hv);
        if (gz == T(0)) continue;
        T* gw = PP->W.grad.row(i);
        const T* w = PP->W.val.row(i);
        for (int j = 0; j < d; ++j) {
          gw[j] += gz * xr[j];
          dx[j] += gz * w[j];
        }
        for (int j = 0; j < H; ++j) {
          gw[d + j] += gz * hr[j];
          dhp[j] += gz * w[d + j];
        }
        PP->b.grad.at(i) += gz;
      }
    }
  });
  return h;
}

// ---------------------------------------------------------------------------
// evaluation path (no tape); identical arithmetic order to the fused nodes so
// pre- and post-finalization predictions agree exactly
// ---------------------------------------------------------------------------

template <class T>
void lstm_step_eval(const Tensor<T>& Wx, const Tensor<T>& Wh, const Tensor<T>& b,
                    std::span<const T> x, std::span<T> h, std::span<T> c) {
  const int H = static_cast<int>(h.size());
  const int d = static_cast<int>(x.size());
  std::vector<T> z(static_cast<size_t>(4) * H);
  for (int i = 0; i < 4 * H; ++i) {
    double acc = static_cast<double>(b.at(i));
    const T* wx = Wx.row(i);
    for (int j = 0; j < d; ++j) acc += static_cast<double>(wx[j]) * x[static_cast<size_t>(j)];
    const T* wh = Wh.row(i);
    for (int j = 0; j < H; ++j) acc += static_cast<double>(wh[j]) * h[static_cast<size_t>(j)];
    z[static_cast<size_t>(i)] = static_cast<T>(acc);
  }
  for (int j = 0; j < H; ++j) {
    const T i_g = sigmoid_scalar(z[static_cast<size_t>(j)]);
    const T f_g = sigmoid_scalar(z[static_cast<size_t>(H + j)]);
    const T g_g = static_cast<T>(std::tanh(static_cast<double>(z[static_cast<size_t>(2 * H + j)])));
    const T o_g = sigmoid_scalar(z[static_cast<size_t>(3 * H + j)]);
    const T c2 = f_g * c[static_cast<size_t>(j)] + i_g * g_g;
    const T tc = static_cast<T>(std::tanh(static_cast<double>(c2)));
    c[static_cast<size_t>(j)] = c2;
    h[static_cast<size_t>(j)] = o_g * tc;
  }
}

template <class T>
void rnn_step_eval(const Tensor<T>& W, const Tensor<T>& b, std::span<const T> x, std::span<T> h) {
  const int H = static_cast<int>(h.size());
  const int d = static_cast<int>(x.size());
  std::vector<T> h_new(static_cast<size_t>(H));
  for (int i = 0; i < H; ++i) {
    double acc = static_cast<double>(b.at(i));
    const T* w = W.row(i);
    for (int j = 0; j < d; ++j) acc += static_cast<double>(w[j]) * x[static_cast<size_t>(j)];
    for (int j = 0; j < H; ++j) acc += static_cast<double>(w[d + j]) * h[static_cast<size_t>(j)];
    h_new[static_cast<size_t>(i)] = static_cast<T>(std::tanh(acc));
  }
  std::copy(h_new.begin(), h_new.end(), h.begin());
}

/// logits = W h + b, evaluation path.
template <class T>
std::vector<T> head_eval(const Tensor<T>& W, const Tensor<T>& b, std::span<const T> h) {
  const int C = W.shape[0];
  const int H = W.shape[1];
  std::vector<T> logits(static_cast<size_t>(C));
  for (int i = 0; i < C; ++i) {
    double acc = static_cast<double>(b.at(i));
    const T* w = W.row(i);
    for (int j = 0; j < H; ++j) acc += static_cast<double>(w[j]) * h[static_cast<size_t>(j)];
    logits[static_cast<size_t>(i)] = static_cast<T>(acc);
  }
  return logits;
}

}  // namespace clem
