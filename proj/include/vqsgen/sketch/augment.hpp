#pragma once

// Stroke- and sketch-level augmentation on vector sketches, and conversion
// of vector sketches into decoupled triplets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vqsgen/sketch/raster.hpp"
#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

/// All ranges are symmetric around the identity; zero ranges disable a transform.
struct AugmentPolicy {
  double stroke_prob = 0.0;        // chance that a given stroke is transformed
  double stroke_rotate_deg = 0.0;  // uniform in [-r, r], about the stroke's box center
  double stroke_translate = 0.0;   // uniform in [-t, t] as a fraction of the canvas
  double stroke_scale = 0.0;       // scale factor uniform in [1-s, 1+s]
  double sketch_rotate_deg = 0.0;  // about the canvas center
  double removal_prob = 0.0;
  std::size_t min_keep = 1;
  int max_retries = 8;

  bool identity() const {
    return (stroke_prob == 0.0 || (stroke_rotate_deg == 0.0 && stroke_translate == 0.0 && stroke_scale == 0.0)) &&
           sketch_rotate_deg == 0.0 && removal_prob == 0.0;
  }
};

namespace detail {

struct Similarity {
  double angle = 0.0, scale = 1.0, tx = 0.0, ty = 0.0;
  Point pivot;
  bool identity() const { return angle == 0.0 && scale == 1.0 && tx == 0.0 && ty == 0.0; }
};

inline Polyline apply(const Polyline& line, const Similarity& t) {
  if (t.identity()) return line;
  const double c = std::cos(t.angle) * t.scale, s = std::sin(t.angle) * t.scale;
  Polyline out;
  out.points.reserve(line.points.size());
  for (const Point& p : line.points) {
    const double dx = p.x - t.pivot.x, dy = p.y - t.pivot.y;
    out.points.push_back({t.pivot.x + c * dx - s * dy + t.tx, t.pivot.y + s * dx + c * dy + t.ty});
  }
  return out;
}

inline bool inside(const Polyline& line, double canvas) {
  for (const Point& p : line.points)
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < canvas && p.y < canvas)) return false;
  return true;
}

inline Point box_center(const Polyline& line) {
  double x0 = line.points[0].x, x1 = x0, y0 = line.points[0].y, y1 = y0;
  for (const Point& p : line.points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {(x0 + x1) / 2.0, (y0 + y1) / 2.0};
}

inline double symmetric(std::mt19937_64& rng, double r) {
  if (r == 0.0) return 0.0;
  return std::uniform_real_distribution<double>(-r, r)(rng);
}

}  // namespace detail

/// Deterministic in (sketch, seed, policy). A transform moving any point off
/// the canvas is redrawn up to max_retries times, then skipped.
inline RawSketch augment_sketch(const RawSketch& s, std::uint64_t seed, const AugmentPolicy& policy, double canvas_size) {
  if (policy.identity()) return s;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double deg = std::numbers::pi / 180.0;
  RawSketch out = s;

  for (RawStroke& st : out.strokes) {
    if (unit(rng) >= policy.stroke_prob) continue;
    for (int attempt = 0; attempt < policy.max_retries; ++attempt) {
      detail::Similarity t;
      t.pivot = detail::box_center(st.polyline);
      t.angle = detail::symmetric(rng, policy.stroke_rotate_deg) * deg;
      t.scale = 1.0 + detail::symmetric(rng, policy.stroke_scale);
      t.tx = detail::symmetric(rng, policy.stroke_translate) * canvas_size;
      t.ty = detail::symmetric(rng, policy.stroke_translate) * canvas_size;
      Polyline moved = detail::apply(st.polyline, t);
      if (detail::inside(moved, canvas_size)) {
        st.polyline = std::move(moved);
        break;
      }
    }
  }

  if (policy.sketch_rotate_deg != 0.0) {
    for (int attempt = 0; attempt < policy.max_retries; ++attempt) {
      detail::Similarity t;
      t.pivot = {canvas_size / 2.0, canvas_size / 2.0};
      t.angle = detail::symmetric(rng, policy.sketch_rotate_deg) * deg;
      std::vector<RawStroke> rotated;
      bool ok = true;
      for (const RawStroke& st : out.strokes) {
        rotated.push_back({detail::apply(st.polyline, t), st.part_label});
        ok = ok && detail::inside(rotated.back().polyline, canvas_size);
      }
      if (ok) {
        out.strokes = std::move(rotated);
        break;
      }
    }
  }

  if (policy.removal_prob > 0.0) {
    const std::size_t n = out.strokes.size();
    std::vector<bool> keep(n);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) kept += (keep[i] = unit(rng) >= policy.removal_prob);
    std::vector<std::size_t> dropped;
    for (std::size_t i = 0; i < n; ++i)
      if (!keep[i]) dropped.push_back(i);
    std::shuffle(dropped.begin(), dropped.end(), rng);
    for (std::size_t i = 0; kept < std::min(policy.min_keep, n); ++i, ++kept) keep[dropped[i]] = true;
    std::vector<RawStroke> survivors;
    for (std::size_t i = 0; i < n; ++i)
      if (keep[i]) survivors.push_back(std::move(out.strokes[i]));
    out.strokes = std::move(survivors);
  }
  return out;
}

/// Scales source coordinates onto the model canvas, rasterizes and decouples
/// every stroke. Part labels are resolved against `labels`; an unknown label
/// is an error.
inline Sketch to_sketch(const RawSketch& raw, const std::vector<std::string>& labels, std::size_t category,
                        double source_canvas, std::size_t canvas_size, std::size_t line_width = 1) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = i;
  const double k = static_cast<double>(canvas_size) / source_canvas;
  Sketch out{raw.id, category, {}};
  for (const RawStroke& st : raw.strokes) {
    auto it = index.find(st.part_label);
    if (it == index.end()) throw SketchError("sketch '" + raw.id + "': unknown part label '" + st.part_label + "'");
    Polyline scaled = st.polyline;
    if (k != 1.0)
      for (Point& p : scaled.points) p = {p.x * k, p.y * k};
    auto [shape, bbox] = decouple_stroke(rasterize_stroke(scaled, canvas_size, line_width));
    out.strokes.push_back({std::move(shape), bbox, {it->second, labels.size()}});
  }
  return out;
}

}  // namespace vqsgen
