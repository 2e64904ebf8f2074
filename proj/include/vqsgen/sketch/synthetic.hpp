#pragma once

// Two-category toy corpus: "circles" sketches hold two rings side by side,
// "crosses" sketches hold one X made of two bars.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vqsgen/sketch/dataset_io.hpp"
#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

struct SyntheticOptions {
  std::size_t per_class = 4;
  double canvas_size = 256.0;
  double jitter = 0.06;  // fraction of the canvas
  std::size_t ring_points = 24;
  std::uint64_t seed = 0;
};

inline Polyline ring(double cx, double cy, double r, std::size_t n) {
  Polyline p;
  for (std::size_t i = 0; i <= n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i % n) / static_cast<double>(n);
    p.points.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return p;
}

inline DatasetHeader synthetic_header(double canvas_size = 256.0) { return {canvas_size, {"ring", "bar"}, {"circles", "crosses"}}; }

/// Alternates circles, crosses, circles, ...; ids are "circles-k" / "crosses-k".
inline std::vector<RawSketch> synthetic_sketches(const SyntheticOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  const double S = opt.canvas_size;
  std::uniform_real_distribution<double> j(-opt.jitter * S, opt.jitter * S), size(0.85, 1.15);
  std::vector<RawSketch> out;
  for (std::size_t k = 0; k < opt.per_class; ++k) {
    RawSketch c{"circles-" + std::to_string(k), "circles", {}};
    const double r = 0.16 * S * size(rng), cy = 0.5 * S + j(rng);
    c.strokes.push_back({ring(0.28 * S + j(rng), cy, r, opt.ring_points), "ring"});
    c.strokes.push_back({ring(0.72 * S + j(rng), cy + j(rng), r * size(rng), opt.ring_points), "ring"});
    out.push_back(std::move(c));

    RawSketch x{"crosses-" + std::to_string(k), "crosses", {}};
    const double h = 0.3 * S * size(rng), cx = 0.5 * S + j(rng), cy2 = 0.5 * S + j(rng);
    x.strokes.push_back({Polyline{{{cx - h, cy2 - h}, {cx + h, cy2 + h}}}, "bar"});
    x.strokes.push_back({Polyline{{{cx - h, cy2 + h}, {cx + h, cy2 - h}}}, "bar"});
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace vqsgen
