#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "clem/tape.hpp"

namespace clem {

/// Central-finite-difference check of the backward pass. The builder must be
/// deterministic given its captured state (freeze any Gumbel noise before
/// calling). Returns the max relative discrepancy over all parameter entries.
/// Run with T=double: float32 losses are too coarse for h=1e-4 differences.
template <class T>
double gradient_check(const std::function<Value<T>*(Tape<T>&)>& build,
                      std::span<Value<T>* const> params, double eps = 1e-4) {
  auto eval = [&]() {
    Tape<T> tape;
    Value<T>* loss = build(tape);
    return static_cast<double>(loss->val.v[0]);
  };

  // analytic gradients
  std::vector<Tensor<T>> analytic;
  {
    Tape<T> tape;
    for (auto* p : params) p->zero_grad();
    Value<T>* loss = build(tape);
    tape.backward(loss);
    for (auto* p : params) analytic.push_back(p->grad);
    for (auto* p : params) p->zero_grad();
  }

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& w = params[pi]->val;
    for (long i = 0; i < w.size(); ++i) {
      const T orig = w.v[i];
      const double h = eps * std::max(1.0, std::abs(static_cast<double>(orig)));
      w.v[i] = static_cast<T>(orig + h);
      double up = eval();
      w.v[i] = static_cast<T>(orig - h);
      double down = eval();
      w.v[i] = orig;
      double fd = (up - down) / (2.0 * h);
      double an = static_cast<double>(analytic[pi].v[i]);
      double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace clem
