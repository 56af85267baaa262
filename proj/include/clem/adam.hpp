#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "clem/tape.hpp"

namespace clem {

/// Adam with bias correction. lr comes from the run config; beta/eps are the
/// reference defaults.
template <class T = float>
struct AdamState {
  T lr = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  long step = 0;
  std::vector<Tensor<T>> m1, m2;

  void init(std::span<Value<T>* const> params) {
    m1.clear();
    m2.clear();
    for (auto* p : params) {
      m1.push_back(Tensor<T>::zeros(p->val.shape));
      m2.push_back(Tensor<T>::zeros(p->val.shape));
    }
    step = 0;
  }
};

/// One Adam update over all parameters; gradients are zeroed afterward.
/// A non-finite gradient aborts the step before any parameter is touched.
template <class T>
void adam_step(std::span<Value<T>* const> params, AdamState<T>& st) {
  if (st.m1.size() != params.size()) throw std::logic_error("adam_step: state not initialized");
  for (size_t pi = 0; pi < params.size(); ++pi) {
    if (!params[pi]->grad.finite())
      throw std::runtime_error("adam_step: non-finite gradient in parameter " + std::to_string(pi));
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(st.beta1), static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(st.beta2), static_cast<double>(st.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& w = params[pi]->val;
    auto& g = params[pi]->grad;
    auto& m = st.m1[pi];
    auto& v = st.m2[pi];
    for (long i = 0; i < w.size(); ++i) {
      m.v[i] = st.beta1 * m.v[i] + (T(1) - st.beta1) * g.v[i];
      v.v[i] = st.beta2 * v.v[i] + (T(1) - st.beta2) * g.v[i] * g.v[i];
      double mhat = static_cast<double>(m.v[i]) / bc1;
      double vhat = static_cast<double>(v.v[i]) / bc2;
      w.v[i] -= static_cast<T>(static_cast<double>(st.lr) * mhat /
                               (std::sqrt(vhat) + static_cast<double>(st.eps)));
    }
    g.zero();
  }
}

/// Global-norm gradient clipping, off by default in the trainer.
template <class T>
void clip_gradients(std::span<Value<T>* const> params, T max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    for (T g : p->grad.v) sq += static_cast<double>(g) * static_cast<double>(g);
  double norm = std::sqrt(sq);
  if (norm <= static_cast<double>(max_norm)) return;
  T scale = static_cast<T>(static_cast<double>(max_norm) / norm);
  for (auto* p : params)
    for (auto& g : p->grad.v) g *= scale;
}

}  // namespace clem
