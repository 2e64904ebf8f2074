#pragma once

// Central finite-difference verification of autodiff gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "vqsgen/core/params.hpp"
#include "vqsgen/core/tensor.hpp"

namespace vqsgen {

struct GradCheckOptions {
  double h = 1e-4;
  double tol = 1e-3;
  // Relative error denominator floor; keeps near-zero gradients from
  // turning rounding noise into large ratios.
  double abs_floor = 1e-6;
  // Coordinates within reach of a kink (relu zero, nearest-code switch) are
  // excluded when the one-sided slopes fail to converge by this fraction.
  double kink_tol = 1e-3;
  // 0 checks every coordinate; otherwise a seeded random subset per array.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  bool passed = true;
};

/// Compares d(fn)/d(param) from backward() against (f(x+h) - f(x-h)) / 2h
/// for each coordinate of each named array. `fn` must rebuild the graph on
/// every call.
inline GradCheckReport check_gradients(const std::function<Var()>& fn,
                                       const std::vector<std::pair<std::string, Var>>& params,
                                       const GradCheckOptions& opt = {}) {
  auto eval = [&]() {
    NoGradGuard ng;
    const double f = fn().item();
    if (!std::isfinite(f)) throw NumericError("check_gradients: function value is not finite");
    return f;
  };

  for (const auto& [_, p] : params) Var(p).zero_grad();
  Var loss = fn();
  if (!std::isfinite(loss.item())) throw NumericError("check_gradients: function value is not finite");
  const double f0 = loss.item();
  backward(loss);

  GradCheckReport rep;
  Rng rng(opt.seed);
  for (const auto& [name, param] : params) {
    Var p = param;
    GradCheckEntry e{name};
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opt.max_coords_per_param && coords.size() > opt.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    auto w = p.mutable_values();
    for (std::size_t i : coords) {
      const double x0 = w[i];
      auto at = [&](double dx) {
        w[i] = x0 + dx;
        const double f = eval();
        w[i] = x0;
        return f;
      };
      const double fp = at(opt.h), fm = at(-opt.h), fp2 = at(opt.h / 2), fm2 = at(-opt.h / 2);
      // Gap between one-sided slopes: about f''h when smooth, so it halves
      // with h; a kink within reach keeps it from halving.
      const double gap = (fp - 2.0 * f0 + fm) / opt.h, gap2 = (fp2 - 2.0 * f0 + fm2) / (opt.h / 2);
      const double slope_scale = std::max({std::abs(fp - fm) / (2.0 * opt.h), opt.abs_floor});
      const double noise = 1e-11 * std::max(1.0, std::abs(f0)) / opt.h;
      const double kink = std::abs(gap2 - gap / 2);
      if (kink > opt.kink_tol * slope_scale && kink > noise) {
        ++e.excluded;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic[i]), opt.abs_floor});
      e.max_rel_err = std::max(e.max_rel_err, rel);
      e.max_abs_err = std::max(e.max_abs_err, abs_err);
      ++e.checked;
    }
    rep.max_rel_err = std::max(rep.max_rel_err, e.max_rel_err);
    rep.checked += e.checked;
    rep.excluded += e.excluded;
    if (e.max_rel_err >= opt.tol) rep.passed = false;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

}  // namespace vqsgen
