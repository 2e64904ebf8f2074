#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqsgen {

class SketchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pixel values above this count as ink for bounding boxes and distance fields.
inline constexpr double kInkThreshold = 0.5;

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Pen trace in canvas pixel coordinates, origin top-left.
struct Polyline {
  std::vector<Point> points;

  bool operator==(const Polyline&) const = default;

  void validate() const {
    if (points.empty()) throw SketchError("polyline has no points");
    for (const Point& p : points)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw SketchError("polyline has a non-finite coordinate");
  }

  double arc_length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) s += std::hypot(points[i].x - points[i - 1].x, points[i].y - points[i - 1].y);
    return s;
  }
};

/// Square grid of reals, row-major.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::size_t size, double fill = 0.0) : size_(size), px_(size * size, fill) {}
  Grid(std::size_t size, std::vector<double> px) : size_(size), px_(std::move(px)) {
    if (px_.size() != size_ * size_) throw SketchError("grid data does not match its size");
  }

  std::size_t size() const { return size_; }
  double at(std::size_t y, std::size_t x) const { return px_[y * size_ + x]; }
  double& at(std::size_t y, std::size_t x) { return px_[y * size_ + x]; }
  const std::vector<double>& pixels() const { return px_; }
  std::vector<double>& pixels() { return px_; }

  bool operator==(const Grid&) const = default;

 protected:
  std::size_t size_ = 0;
  std::vector<double> px_;
};

/// Grayscale stroke raster with values in [0, 1].
class StrokeImage : public Grid {
 public:
  using Grid::Grid;

  std::size_t ink_count() const {
    std::size_t n = 0;
    for (double v : px_) n += v > kInkThreshold;
    return n;
  }
  bool empty() const { return ink_count() == 0; }
};

/// Per-pixel distance to the nearest ink pixel over the canvas diagonal.
class DistanceMap : public Grid {
 public:
  using Grid::Grid;
};

/// Canvas-normalized position quad (w/2, h/2, x, y).
struct StrokeBBox {
  double half_w = 0.0;
  double half_h = 0.0;
  double cx = 0.5;
  double cy = 0.5;

  bool operator==(const StrokeBBox&) const = default;

  double left() const { return cx - half_w; }
  double right() const { return cx + half_w; }
  double top() const { return cy - half_h; }
  double bottom() const { return cy + half_h; }

  bool valid(double tol = 1e-12) const {
    return half_w >= -tol && half_h >= -tol && half_w <= 0.5 + tol && half_h <= 0.5 + tol && left() >= -tol &&
           top() >= -tol && right() <= 1.0 + tol && bottom() <= 1.0 + tol;
  }
};

struct StrokeLabel {
  std::size_t index = 0;
  std::size_t count = 1;

  bool operator==(const StrokeLabel&) const = default;

  std::vector<double> one_hot() const {
    std::vector<double> v(count, 0.0);
    v.at(index) = 1.0;
    return v;
  }
  void validate() const {
    if (index >= count) throw SketchError("stroke label " + std::to_string(index) + " out of range for C=" + std::to_string(count));
  }
};

/// Centered shape raster, its original position, and its semantic label.
struct StrokeTriplet {
  StrokeImage shape;
  StrokeBBox bbox;
  StrokeLabel label;
};

struct Sketch {
  std::string id;
  std::size_t category = 0;
  std::vector<StrokeTriplet> strokes;
};

/// Vector-form stroke as read from a dataset, before rasterization.
struct RawStroke {
  Polyline polyline;
  std::string part_label;
  bool operator==(const RawStroke&) const = default;
};

struct RawSketch {
  std::string id;
  std::string category;
  std::vector<RawStroke> strokes;
  bool operator==(const RawSketch&) const = default;
};

}  // namespace vqsgen
