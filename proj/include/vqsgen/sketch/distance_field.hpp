#pragma once

// Exact Euclidean distance transform (Felzenszwalb-Huttenlocher lower
// envelope of parabolas, one pass per axis).

#include <cmath>
#include <limits>
#include <vector>

#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

namespace detail {

// 1D squared distance transform of f over n samples, written to d.
inline void edt_1d(const double* f, double* d, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  z[0] = -inf;
  z[1] = inf;
  auto parabola = [f](std::size_t p) { return f[p] + static_cast<double>(p) * static_cast<double>(p); };
  for (std::size_t q = 1; q < n; ++q) {
    double s = (parabola(q) - parabola(v[k])) / (2.0 * (static_cast<double>(q) - static_cast<double>(v[k])));
    while (s <= z[k]) {
      --k;
      s = (parabola(q) - parabola(v[k])) / (2.0 * (static_cast<double>(q) - static_cast<double>(v[k])));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

// Stand-in for +inf that keeps the parabola intersections finite.
inline constexpr double kFar = 1e20;

}  // namespace detail

/// Squared pixel distance from every pixel to the nearest ink pixel.
inline std::vector<double> squared_distance_to_ink(const StrokeImage& img) {
  const std::size_t n = img.size();
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n * n; ++i) g[i] = img.pixels()[i] > kInkThreshold ? 0.0 : detail::kFar;
  std::vector<std::size_t> v;
  std::vector<double> z, col(n), out(n);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) col[y] = g[y * n + x];
    detail::edt_1d(col.data(), out.data(), n, v, z);
    for (std::size_t y = 0; y < n; ++y) g[y * n + x] = out[y];
  }
  for (std::size_t y = 0; y < n; ++y) {
    detail::edt_1d(g.data() + y * n, out.data(), n, v, z);
    std::copy(out.begin(), out.end(), g.begin() + static_cast<std::ptrdiff_t>(y * n));
  }
  return g;
}

/// Unsigned distance to the nearest ink pixel divided by the canvas diagonal.
inline DistanceMap distance_field(const StrokeImage& img) {
  if (img.empty()) throw SketchError("distance_field: empty stroke");
  const std::size_t n = img.size();
  const double diag = std::sqrt(2.0 * static_cast<double>(n * n));
  std::vector<double> d = squared_distance_to_ink(img);
  for (double& v : d) v = std::sqrt(v) / diag;
  return DistanceMap(n, std::move(d));
}

}  // namespace vqsgen
