#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "clem/tensor.hpp"

namespace clem {

/// A differentiable value: forward result plus accumulated adjoint.
/// Parameters are long-lived Values owned by the model; intermediates are
/// owned by the tape and live until reset().
template <class T = float>
struct Value {
  Tensor<T> val;
  Tensor<T> grad;

  Value() = default;
  explicit Value(Tensor<T> t) : val(std::move(t)), grad(Tensor<T>::zeros(val.shape)) {}

  void set(Tensor<T> t) {
    val = std::move(t);
    grad = Tensor<T>::zeros(val.shape);
  }
  void zero_grad() { grad.zero(); }
};

/// Define-by-run reverse-mode tape, rebuilt per minibatch. Single-threaded;
/// independent runs get independent tapes.
template <class T = float>
class Tape {
 public:
  Value<T>* make(Tensor<T> t) {
    pool_.emplace_back(std::move(t));
    return &pool_.back();
  }

  void record(std::function<void()> back) { nodes_.push_back(std::move(back)); }

  /// Seed d(loss)/d(loss)=1 and run all recorded closures in reverse.
  void backward(Value<T>* loss) {
    if (loss->val.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    loss->grad.v[0] = T(1);
    backward_from_grads();
  }

  /// Run the recorded closures in reverse against already-seeded adjoints.
  void backward_from_grads() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void reset() {
    nodes_.clear();
    pool_.clear();
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
  std::deque<Value<T>> pool_;  // deque: stable addresses
};

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

/// y = W x + b for a single vector, or Y = X W^T + b row-wise for a batch.
/// x: [n] or [B x n], W: [p x n], b: [p] (may be null).
template <class T>
Value<T>* affine(Tape<T>& tape, Value<T>* x, Value<T>* W, Value<T>* b) {
  const int p = W->val.shape[0];
  const int n = W->val.shape[1];
  const bool batched = x->val.rank() == 2;
  const int B = batched ? x->val.shape[0] : 1;
  require_shape(x->val.cols() == n, "affine: x width vs W");
  if (b) require_shape(b->val.rank() == 1 && b->val.shape[0] == p, "affine: bias");

  Tensor<T> out(batched ? std::vector<int>{B, p} : std::vector<int>{p});
  for (int r = 0; r < B; ++r) {
    const T* xr = batched ? x->val.row(r) : x->val.v.data();
    T* yr = batched ? out.row(r) : out.v.data();
    for (int i = 0; i < p; ++i) {
      double acc = b ? static_cast<double>(b->val.at(i)) : 0.0;
      const T* wi = W->val.row(i);
      for (int j = 0; j < n; ++j) acc += static_cast<double>(wi[j]) * xr[j];
      yr[i] = static_cast<T>(acc);
    }
  }
  Value<T>* y = tape.make(std::move(out));
  tape.record([=]() {
    for (int r = 0; r < B; ++r) {
      const T* xr = batched ? x->val.row(r) : x->val.v.data();
      const T* gy = batched ? y->grad.row(r) : y->grad.v.data();
      T* gx = batched ? x->grad.row(r) : x->grad.v.data();
      for (int i = 0; i < p; ++i) {
        const T g = gy[i];
        if (g == T(0)) continue;
        T* gwi = W->grad.row(i);
        const T* wi = W->val.row(i);
        for (int j = 0; j < n; ++j) {
          gwi[j] += g * xr[j];
          gx[j] += g * wi[j];
        }
        if (b) b->grad.at(i) += g;
      }
    }
  });
  return y;
}

template <class T>
Value<T>* add(Tape<T>& tape, Value<T>* a, Value<T>* b) {
  require_shape(a->val.same_shape(b->val), "add");
  Tensor<T> out = a->val;
  for (long i = 0; i < out.size(); ++i) out.v[i] += b->val.v[i];
  Value<T>* y = tape.make(std::move(out));
  tape.record([=]() {
    for (long i = 0; i < y->grad.size(); ++i) {
      a->grad.v[i] += y->grad.v[i];
      b->grad.v[i] += y->grad.v[i];
    }
  });
  return y;
}

template <class T>
Value<T>* mul(Tape<T>& tape, Value<T>* a, Value<T>* b) {
  require_shape(a->val.same_shape(b->val), "mul");
  Tensor<T> out = a->val;
  for (long i = 0; i < out.size(); ++i) out.v[i] *= b->val.v[i];
  Value<T>* y = tape.make(std::move(out));
  tape.record([=]() {
    for (long i = 0; i < y->grad.size(); ++i) {
      a->grad.v[i] += y->grad.v[i] * b->val.v[i];
      b->grad.v[i] += y->grad.v[i] * a->val.v[i];
    }
  });
  return y;
}

template <class T>
Value<T>* tanh_of(Tape<T>& tape, Value<T>* a) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) x = static_cast<T>(std::tanh(static_cast<double>(x)));
  Value<T>* y = tape.make(std::move(out));
  tape.record([=]() {
    for (long i = 0; i < y->grad.size(); ++i)
      a->grad.v[i] += y->grad.v[i] * (T(1) - y->val.v[i] * y->val.v[i]);
  });
  return y;
}

template <class T>
inline T sigmoid_scalar(T x) {
  // split on sign so exp never overflows
  if (x >= T(0)) {
    T e = static_cast<T>(std::exp(-static_cast<double>(x)));
    return T(1) / (T(1) + e);
  }
  T e = static_cast<T>(std::exp(static_cast<double>(x)));
  return e / (T(1) + e);
}

template <class T>
Value<T>* sigmoid_of(Tape<T>& tape, Value<T>* a) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) x = sigmoid_scalar(x);
  Value<T>* y = tape.make(std::move(out));
  tape.record([=]() {
    for (long i = 0; i < y->grad.size(); ++i)
      a->grad.v[i] += y->grad.v[i] * y->val.v[i] * (T(1) - y->val.v[i]);
  });
  return y;
}

template <class T>
Value<T>* concat_cols(Tape<T>& tape, Value<T>* a, Value<T>* b) {
  require_shape(a->val.rank() == 2 && b->val.rank() == 2 && a->val.shape[0] == b->val.shape[0],
                "concat_cols");
  const int B = a->val.shape[0], na = a->val.shape[1], nb = b->val.shape[1];
  Tensor<T> out({B, na + nb});
  for (int r = 0; r < B; ++r) {
    std::copy(a->val.row(r), a->val.row(r) + na, out.row(r));
    std::copy(b->val.row(r), b->val.row(r) + nb, out.row(r) + na);
  }
  Value<T>* y = tape.make(std::move(out));
  tape.record([=]() {
    for (int r = 0; r < B; ++r) {
      for (int j = 0; j < na; ++j) a->grad.at(r, j) += y->grad.at(r, j);
      for (int j = 0; j < nb; ++j) b->grad.at(r, j) += y->grad.at(r, na + j);
    }
  });
  return y;
}

/// Numerically stable log-softmax of one row.
template <class T>
inline void log_softmax_row(const T* z, int n, double* out) {
  double mx = -1e300;
  for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(z[i]));
  double lse = 0.0;
  for (int i = 0; i < n; ++i) lse += std::exp(static_cast<double>(z[i]) - mx);
  lse = std::log(lse) + mx;
  for (int i = 0; i < n; ++i) out[i] = static_cast<double>(z[i]) - lse;
}

/// -log softmax(logits)[label] for a single logit vector.
template <class T>
Value<T>* softmax_cross_entropy(Tape<T>& tape, Value<T>* logits, int label) {
  const int C = static_cast<int>(logits->val.size());
  if (label < 0 || label >= C) throw std::out_of_range("softmax_cross_entropy: label");
  std::vector<double> lp(C);
  log_softmax_row(logits->val.v.data(), C, lp.data());
  Value<T>* y = tape.make(Tensor<T>({1}, {static_cast<T>(-lp[label])}));
  tape.record([=]() {
    const T g = y->grad.v[0];
    for (int i = 0; i < C; ++i) {
      T p = static_cast<T>(std::exp(lp[i]));
      logits->grad.at(i) += g * (p - (i == label ? T(1) : T(0)));
    }
  });
  return y;
}

/// Mean cross entropy over a batch of logit rows.
template <class T>
Value<T>* softmax_cross_entropy_mean(Tape<T>& tape, Value<T>* logits, std::span<const int> labels) {
  const int B = logits->val.shape[0];
  const int C = logits->val.shape[1];
  if (static_cast<int>(labels.size()) != B)
    throw std::invalid_argument("softmax_cross_entropy_mean: label count");
  auto lp = std::make_shared<std::vector<double>>(static_cast<size_t>(B) * C);
  double total = 0.0;
  for (int r = 0; r < B; ++r) {
    if (labels[r] < 0 || labels[r] >= C) throw std::out_of_range("label out of range");
    log_softmax_row(logits->val.row(r), C, lp->data() + static_cast<size_t>(r) * C);
    total -= (*lp)[static_cast<size_t>(r) * C + labels[r]];
  }
  Value<T>* y = tape.make(Tensor<T>({1}, {static_cast<T>(total / B)}));
  std::vector<int> labs(labels.begin(), labels.end());
  tape.record([=, labs = std::move(labs)]() {
    const T g = y->grad.v[0] / static_cast<T>(B);
    for (int r = 0; r < B; ++r) {
      const double* lpr = lp->data() + static_cast<size_t>(r) * C;
      for (int i = 0; i < C; ++i) {
        T p = static_cast<T>(std::exp(lpr[i]));
        logits->grad.at(r, i) += g * (p - (i == labs[r] ? T(1) : T(0)));
      }
    }
  });
  return y;
}

}  // namespace clem
