#pragma once

// Iso-contour polylines of a raster by marching squares, sampled at pixel
// centers with a zero border so every contour closes.

#include <map>
#include <utility>
#include <vector>

#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

/// Closed outlines in canvas pixel coordinates; the last point repeats the first.
inline std::vector<Polyline> trace_outline(const StrokeImage& img, double iso = kInkThreshold) {
  const long n = static_cast<long>(img.size());
  auto v = [&](long x, long y) {
    return x < 0 || y < 0 || x >= n || y >= n ? 0.0 : img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  // Edge ids: horizontal edge (x,y)-(x+1,y) has kind 0, vertical (x,y)-(x,y+1) kind 1.
  auto key = [n](int kind, long x, long y) { return (static_cast<long>(kind) * (n + 3) + x + 1) * (n + 3) + y + 1; };
  auto cut = [&](int kind, long x, long y) {
    const double a = v(x, y), b = kind == 0 ? v(x + 1, y) : v(x, y + 1);
    const double t = (iso - a) / (b - a);
    return kind == 0 ? Point{x + t + 0.5, y + 0.5} : Point{x + 0.5, y + t + 0.5};
  };
  std::vector<std::pair<long, long>> segs;
  std::map<long, Point> where;
  for (long y = -1; y < n; ++y)
    for (long x = -1; x < n; ++x) {
      const int c = (v(x, y) > iso) << 3 | (v(x + 1, y) > iso) << 2 | (v(x + 1, y + 1) > iso) << 1 | (v(x, y + 1) > iso);
      if (c == 0 || c == 15) continue;
      const std::pair<int, std::pair<long, long>> T{0, {x, y}}, B{0, {x, y + 1}}, L{1, {x, y}}, R{1, {x + 1, y}};
      auto seg = [&](const auto& p, const auto& q) {
        const long kp = key(p.first, p.second.first, p.second.second), kq = key(q.first, q.second.first, q.second.second);
        where.emplace(kp, cut(p.first, p.second.first, p.second.second));
        where.emplace(kq, cut(q.first, q.second.first, q.second.second));
        segs.emplace_back(kp, kq);
      };
      const bool center = (v(x, y) + v(x + 1, y) + v(x + 1, y + 1) + v(x, y + 1)) / 4.0 > iso;
      switch (c) {
        case 1: case 14: seg(L, B); break;
        case 2: case 13: seg(B, R); break;
        case 3: case 12: seg(L, R); break;
        case 4: case 11: seg(T, R); break;
        case 6: case 9: seg(T, B); break;
        case 7: case 8: seg(L, T); break;
        case 5:
          if (center) seg(L, T), seg(B, R);
          else seg(T, R), seg(L, B);
          break;
        case 10:
          if (center) seg(T, R), seg(L, B);
          else seg(L, T), seg(B, R);
          break;
      }
    }
  std::map<long, std::vector<std::size_t>> at;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    at[segs[i].first].push_back(i);
    at[segs[i].second].push_back(i);
  }
  std::vector<bool> used(segs.size(), false);
  std::vector<Polyline> out;
  for (std::size_t s0 = 0; s0 < segs.size(); ++s0) {
    if (used[s0]) continue;
    used[s0] = true;
    Polyline line{{where[segs[s0].first], where[segs[s0].second]}};
    const long start = segs[s0].first;
    long cur = segs[s0].second;
    while (cur != start) {
      std::size_t next = segs.size();
      for (std::size_t j : at[cur])
        if (!used[j]) next = j;
      if (next == segs.size()) break;
      used[next] = true;
      cur = segs[next].first == cur ? segs[next].second : segs[next].first;
      line.points.push_back(where[cur]);
    }
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace vqsgen
