#pragma once

// Dataset cleanup: drop 'details' strokes, drop overlong strokes, merge
// chains of connected strokes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

struct PreprocessOptions {
  std::string details_label = "details";
  double max_stroke_len = std::numeric_limits<double>::infinity();
  // Strokes whose endpoints come within this many pixels are connected.
  double merge_eps = 2.0;
};

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

inline double endpoint_gap(const Polyline& a, const Polyline& b) {
  const Point ends_a[2] = {a.points.front(), a.points.back()};
  const Point ends_b[2] = {b.points.front(), b.points.back()};
  double best = std::numeric_limits<double>::infinity();
  for (const Point& p : ends_a)
    for (const Point& q : ends_b) best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
  return best;
}

// Greedy chaining of a connected group, starting from its earliest stroke.
// Each step attaches the remaining stroke whose endpoint is nearest to either
// end of the chain, reversing it as needed; an exactly shared endpoint is
// not duplicated.
inline Polyline chain(const std::vector<const Polyline*>& group) {
  Polyline out = *group.front();
  std::vector<bool> used(group.size(), false);
  used[0] = true;
  for (std::size_t step = 1; step < group.size(); ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0;
    int mode = 0;  // 0: tail->front, 1: tail->back, 2: back->head, 3: front->head
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (used[i]) continue;
      const Point& h = out.points.front();
      const Point& t = out.points.back();
      const Point& f = group[i]->points.front();
      const Point& b = group[i]->points.back();
      const double d[4] = {std::hypot(t.x - f.x, t.y - f.y), std::hypot(t.x - b.x, t.y - b.y),
                           std::hypot(h.x - b.x, h.y - b.y), std::hypot(h.x - f.x, h.y - f.y)};
      for (int m = 0; m < 4; ++m)
        if (d[m] < best) {
          best = d[m];
          bi = i;
          mode = m;
        }
    }
    used[bi] = true;
    std::vector<Point> pts = group[bi]->points;
    if (mode == 1 || mode == 3) std::reverse(pts.begin(), pts.end());
    if (mode <= 1) {
      auto from = pts.begin() + (pts.front() == out.points.back() ? 1 : 0);
      out.points.insert(out.points.end(), from, pts.end());
    } else {
      auto to = pts.end() - (pts.back() == out.points.front() ? 1 : 0);
      out.points.insert(out.points.begin(), pts.begin(), to);
    }
  }
  return out;
}

}  // namespace detail

/// Removes detail and overlong strokes, then merges same-label strokes that
/// form a connected endpoint graph. A group is merged only if the chained
/// polyline stays within max_stroke_len, which keeps the whole operation
/// idempotent. Merged strokes take the drawing position of their earliest member.
inline RawSketch preprocess_sketch(const RawSketch& raw, const PreprocessOptions& opt = {}) {
  RawSketch out{raw.id, raw.category, {}};
  std::vector<RawStroke> kept;
  for (const RawStroke& s : raw.strokes) {
    if (s.part_label == opt.details_label) continue;
    if (s.polyline.points.empty()) continue;
    if (s.polyline.arc_length() > opt.max_stroke_len) continue;
    kept.push_back(s);
  }

  const std::size_t n = kept.size();
  detail::UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (kept[i].part_label == kept[j].part_label &&
          detail::endpoint_gap(kept[i].polyline, kept[j].polyline) <= opt.merge_eps)
        uf.unite(i, j);

  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);

  // Emit in drawing order: a merged group appears where its first member was.
  std::vector<bool> emitted(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (emitted[i]) continue;
    const auto& g = groups[uf.find(i)];
    if (g.size() > 1) {
      std::vector<const Polyline*> members;
      for (std::size_t k : g) members.push_back(&kept[k].polyline);
      Polyline merged = detail::chain(members);
      if (merged.arc_length() <= opt.max_stroke_len) {
        for (std::size_t k : g) emitted[k] = true;
        out.strokes.push_back({std::move(merged), kept[i].part_label});
        continue;
      }
    }
    out.strokes.push_back(kept[i]);
    emitted[i] = true;
  }
  if (out.strokes.empty()) throw SketchError("sketch '" + raw.id + "' is empty after preprocessing");
  return out;
}

/// Linear-interpolated percentile (q in [0, 100]) of stroke arc lengths.
inline double arc_length_percentile(const std::vector<RawSketch>& sketches, double q, const std::string& details_label = "details") {
  std::vector<double> lens;
  for (const auto& s : sketches)
    for (const auto& st : s.strokes)
      if (st.part_label != details_label && !st.polyline.points.empty()) lens.push_back(st.polyline.arc_length());
  if (lens.empty()) return std::numeric_limits<double>::infinity();
  std::sort(lens.begin(), lens.end());
  const double pos = q / 100.0 * static_cast<double>(lens.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, lens.size() - 1);
  return lens[lo] + (pos - static_cast<double>(lo)) * (lens[hi] - lens[lo]);
}

}  // namespace vqsgen
