#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vqsgen/core/tensor.hpp"

namespace vqsgen {

struct LrSchedule {
  enum class Kind { Constant, StepDecay };
  Kind kind = Kind::Constant;
  double base_lr = 1e-4;
  std::size_t step_size = 10;
  double decay = 1.0;

  void validate() const {
    if (step_size < 1) throw std::invalid_argument("LrSchedule: step_size must be >= 1");
    if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("LrSchedule: decay must be in (0, 1]");
  }
};

/// Signals a stop once the loss has not improved for `patience` epochs (0 never stops).
struct EarlyStop {
  std::size_t patience = 0;
  double best = INFINITY;
  std::size_t stale = 0;

  bool update(double loss) {
    if (loss < best) {
      best = loss;
      stale = 0;
    } else {
      ++stale;
    }
    return patience > 0 && stale >= patience;
  }
};

/// lr0 * decay^floor(epoch / step_size) for step decay; lr0 otherwise.
inline double lr_at(const LrSchedule& s, std::size_t epoch) {
  s.validate();
  if (s.kind == LrSchedule::Kind::Constant) return s.base_lr;
  return s.base_lr * std::pow(s.decay, static_cast<double>(epoch / s.step_size));
}

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update using the gradients currently held by `params`.
inline void adam_step(AdamState& st, const std::vector<Var>& params) {
  if (st.m.empty()) {
    for (const Var& p : params) {
      st.m.emplace_back(p.size(), 0.0);
      st.v.emplace_back(p.size(), 0.0);
    }
  }
  if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter list changed between steps");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var p = params[k];
    if (st.m[k].size() != p.size()) throw ShapeError("adam_step: moment/parameter size mismatch");
    auto w = p.mutable_values();
    auto g = p.grad();
    auto& m = st.m[k];
    auto& v = st.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      w[i] -= st.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + st.eps);
    }
  }
}

}  // namespace vqsgen
