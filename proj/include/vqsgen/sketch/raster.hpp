#pragma once

// Stroke rasterization and the shape/location decoupling.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <utility>

#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

/// Inclusive pixel extent of the ink.
struct PixelBox {
  long x0, y0, x1, y1;
};

inline std::optional<PixelBox> ink_bounds(const StrokeImage& img) {
  const long n = static_cast<long>(img.size());
  PixelBox b{n, n, -1, -1};
  for (long y = 0; y < n; ++y)
    for (long x = 0; x < n; ++x)
      if (img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) > kInkThreshold) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  if (b.x1 < 0) return std::nullopt;
  return b;
}

/// Binary raster of a polyline: Bresenham segments stamped with a square
/// brush of `line_width` pixels. Coordinates are floored to pixel indices and
/// clamped into the canvas; a single point (or all-identical points) yields
/// one brush dot.
inline StrokeImage rasterize_stroke(const Polyline& line, std::size_t canvas_size, std::size_t line_width = 1) {
  line.validate();
  if (canvas_size == 0 || line_width == 0) throw SketchError("rasterize_stroke: canvas_size and line_width must be positive");
  StrokeImage img(canvas_size);
  const long n = static_cast<long>(canvas_size);
  const long lo = -static_cast<long>((line_width - 1) / 2), hi = static_cast<long>(line_width / 2);
  auto stamp = [&](long x, long y) {
    for (long dy = lo; dy <= hi; ++dy)
      for (long dx = lo; dx <= hi; ++dx) {
        const long px = x + dx, py = y + dy;
        if (px >= 0 && py >= 0 && px < n && py < n) img.at(static_cast<std::size_t>(py), static_cast<std::size_t>(px)) = 1.0;
      }
  };
  auto to_px = [n](double v) { return std::clamp(static_cast<long>(std::floor(v)), 0L, n - 1); };

  long px = to_px(line.points[0].x), py = to_px(line.points[0].y);
  stamp(px, py);
  for (std::size_t i = 1; i < line.points.size(); ++i) {
    const long qx = to_px(line.points[i].x), qy = to_px(line.points[i].y);
    long x = px, y = py;
    const long dx = std::abs(qx - px), dy = -std::abs(qy - py);
    const long sx = px < qx ? 1 : -1, sy = py < qy ? 1 : -1;
    long err = dx + dy;
    while (true) {
      stamp(x, y);
      if (x == qx && y == qy) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
    px = qx;
    py = qy;
  }
  return img;
}

/// Tightest box over ink pixels, canvas-normalized. Pixel i spans [i, i+1).
inline StrokeBBox compute_bbox(const StrokeImage& img) {
  auto b = ink_bounds(img);
  if (!b) throw SketchError("empty stroke");
  const double n2 = 2.0 * static_cast<double>(img.size());
  return {static_cast<double>(b->x1 + 1 - b->x0) / n2, static_cast<double>(b->y1 + 1 - b->y0) / n2,
          static_cast<double>(b->x0 + b->x1 + 1) / n2, static_cast<double>(b->y0 + b->y1 + 1) / n2};
}

struct Placement {
  StrokeImage image;
  bool clipped = false;
};

/// Integer translation; pixels leaving the canvas are dropped and flagged.
inline Placement translate(const StrokeImage& img, long dx, long dy) {
  const long n = static_cast<long>(img.size());
  Placement out{StrokeImage(img.size()), false};
  for (long y = 0; y < n; ++y)
    for (long x = 0; x < n; ++x) {
      const double v = img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      if (v == 0.0) continue;
      const long tx = x + dx, ty = y + dy;
      if (tx < 0 || ty < 0 || tx >= n || ty >= n) {
        out.clipped = out.clipped || v > kInkThreshold;
        continue;
      }
      out.image.at(static_cast<std::size_t>(ty), static_cast<std::size_t>(tx)) = v;
    }
  return out;
}

/// Splits a stroke raster into its canvas-centered shape and its position quad.
inline std::pair<StrokeImage, StrokeBBox> decouple_stroke(const StrokeImage& img) {
  auto b = ink_bounds(img);
  if (!b) throw SketchError("empty stroke");
  const long n = static_cast<long>(img.size());
  auto floor_half = [](long v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); };
  // A box of width <= n shifted to straddle the center always fits.
  const long dx = floor_half(n - b->x0 - b->x1 - 1), dy = floor_half(n - b->y0 - b->y1 - 1);
  return {translate(img, dx, dy).image, compute_bbox(img)};
}

/// Places a centered shape so its ink box center lands on (cx, cy), rounding
/// half-pixel offsets down so a decoupled shape placed at the canvas center
/// stays put. An empty shape yields a blank canvas.
inline Placement recompose(const StrokeImage& shape, const StrokeBBox& bbox) {
  auto b = ink_bounds(shape);
  if (!b) return {StrokeImage(shape.size()), false};
  const double n = static_cast<double>(shape.size());
  const double sx = static_cast<double>(b->x0 + b->x1 + 1) / 2.0, sy = static_cast<double>(b->y0 + b->y1 + 1) / 2.0;
  auto round_half_down = [](double v) { return static_cast<long>(std::ceil(v - 0.5)); };
  const long dx = round_half_down(bbox.cx * n - sx), dy = round_half_down(bbox.cy * n - sy);
  return translate(shape, dx, dy);
}

/// Pixelwise max over every recomposed stroke; blank when there are none.
inline StrokeImage assemble_sketch(const Sketch& sketch, std::size_t canvas_size) {
  StrokeImage out(canvas_size);
  for (const StrokeTriplet& s : sketch.strokes) {
    if (s.shape.size() != canvas_size) throw SketchError("assemble_sketch: stroke raster size differs from canvas");
    const StrokeImage placed = recompose(s.shape, s.bbox).image;
    for (std::size_t i = 0; i < out.pixels().size(); ++i) out.pixels()[i] = std::max(out.pixels()[i], placed.pixels()[i]);
  }
  return out;
}

}  // namespace vqsgen
