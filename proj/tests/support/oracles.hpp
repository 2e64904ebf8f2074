#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. Each one recomputes a library result the slow way.

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "vqsgen/metrics/metrics.hpp"
#include "vqsgen/model/generator.hpp"
#include "vqsgen/model/vq.hpp"
#include "vqsgen/sketch/types.hpp"

namespace vqsgen::oracle {

inline Codebook random_book(std::size_t V, std::size_t d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(V * d);
  for (double& x : v) x = n(rng);
  return Codebook(Var::from({V, d}, std::move(v), true));
}

// Exhaustive scan in long double; the first strictly smaller distance wins.
inline std::size_t oracle_nearest(const std::vector<double>& z, const Codebook& book) {
  std::size_t best = 0;
  long double best_d = -1;
  for (std::size_t j = 0; j < book.size(); ++j) {
    const std::vector<double> c = book.row(j);
    long double s = 0;
    for (std::size_t k = 0; k < z.size(); ++k) s += (static_cast<long double>(z[k]) - c[k]) * (static_cast<long double>(z[k]) - c[k]);
    if (best_d < 0 || s < best_d) {
      best_d = s;
      best = j;
    }
  }
  return best;
}

// Repeated argmax scan (lowest index on ties), then the first prefix reaching p.
inline std::vector<std::size_t> oracle_nucleus(const std::vector<double>& probs, double p) {
  std::vector<bool> used(probs.size(), false);
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    std::size_t best = probs.size();
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (!used[i] && (best == probs.size() || probs[i] > probs[best])) best = i;
    used[best] = true;
    order.push_back(best);
  }
  for (std::size_t k = 1; k <= order.size(); ++k) {
    double mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) mass += probs[order[i]];
    if (mass >= p) return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k)};
  }
  return order;
}

inline std::vector<double> logits_of(const std::vector<double>& probs) {
  std::vector<double> l;
  for (double p : probs) l.push_back(std::log(p));
  return l;
}

// Accumulates log p one autoregressive step at a time with ground-truth context.
inline double stepwise_log_prob(const SketchGenerator& gen, const GenSequence& s) {
  double lp = 0.0;
  GenSequence prefix{{}, s.condition};
  for (std::size_t i = 0; i <= s.tokens.size(); ++i) {
    const auto lab = softmax_vec(gen.label_forward(prefix).first);
    if (i == s.tokens.size()) {
      lp += std::log(lab[gen.config().end_label()]);
      break;
    }
    const GenToken& t = s.tokens[i];
    lp += std::log(lab[t.label]);
    auto [sl, ll] = gen.code_forward(prefix, t.label);
    lp += std::log(softmax_vec(sl)[t.shape_idx]) + std::log(softmax_vec(ll)[t.loc_idx]);
    prefix.tokens.push_back(t);
  }
  return lp;
}

inline StrokeImage random_blob(std::mt19937_64& rng, std::size_t n, long max_w) {
  std::uniform_int_distribution<long> w(1, max_w);
  const long bw = w(rng), bh = w(rng);
  std::uniform_int_distribution<long> ox(0, static_cast<long>(n) - bw), oy(0, static_cast<long>(n) - bh);
  const long x0 = ox(rng), y0 = oy(rng);
  StrokeImage img(n);
  std::bernoulli_distribution on(0.3);
  for (long y = y0; y < y0 + bh; ++y)
    for (long x = x0; x < x0 + bw; ++x)
      if (on(rng)) img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0;
  // Pin the box corners so the ink extent is exactly the drawn box.
  img.at(static_cast<std::size_t>(y0), static_cast<std::size_t>(x0)) = 1.0;
  img.at(static_cast<std::size_t>(y0 + bh - 1), static_cast<std::size_t>(x0 + bw - 1)) = 1.0;
  return img;
}

inline std::vector<double> brute_force_distance(const StrokeImage& img) {
  const std::size_t n = img.size();
  const double diag = std::sqrt(2.0 * static_cast<double>(n * n));
  std::vector<double> out(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t u = 0; u < n; ++u)
          if (img.at(v, u) > 0.5) {
            const double dx = static_cast<double>(x) - static_cast<double>(u);
            const double dy = static_cast<double>(y) - static_cast<double>(v);
            best = std::min(best, dx * dx + dy * dy);
          }
      out[y * n + x] = std::sqrt(best) / diag;
    }
  return out;
}

inline RawStroke raw_stroke(std::vector<Point> pts, std::string label = "body") { return {{std::move(pts)}, std::move(label)}; }

/// Hand fixtures (shared endpoints, near gaps, detail strokes) plus random chains.
inline std::vector<RawSketch> preprocess_fixtures() {
  std::vector<RawSketch> fixtures = {
      {"a", "bird", {raw_stroke({{0, 0}, {5, 0}}), raw_stroke({{5, 0}, {5, 5}}), raw_stroke({{5, 5.5}, {0, 5.5}})}},
      {"b", "bird", {raw_stroke({{0, 0}, {10, 0}}), raw_stroke({{10.5, 0}, {20, 0}}), raw_stroke({{25, 0}, {30, 0}})}},
      {"c", "bird", {raw_stroke({{1, 1}, {2, 2}}, "details"), raw_stroke({{4, 4}, {40, 4}}), raw_stroke({{41, 4}, {41, 30}})}}};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> c(0.0, 40.0), jitter(-1.5, 1.5);
  for (int i = 0; i < 200; ++i) {
    RawSketch s{"r" + std::to_string(i), "bird", {}};
    Point prev{c(rng), c(rng)};
    for (int k = 0; k < 6; ++k) {
      Point start = (k % 2) ? Point{prev.x + jitter(rng), prev.y + jitter(rng)} : Point{c(rng), c(rng)};
      Point end{c(rng), c(rng)};
      s.strokes.push_back(raw_stroke({start, {c(rng), c(rng)}, end}, k % 3 ? "body" : "head"));
      prev = end;
    }
    fixtures.push_back(s);
  }
  return fixtures;
}

// Same quantity through the general (non-symmetric) eigensolver on S_a S_b.
inline double fid_general_eigen(const FeatureSet& a, const FeatureSet& b) {
  auto stats = [](const FeatureSet& f, Eigen::VectorXd& mu, Eigen::MatrixXd& s) {
    const std::size_t m = f.size(), d = f.dim();
    mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (const auto& r : f.rows)
      for (std::size_t j = 0; j < d; ++j) mu(static_cast<Eigen::Index>(j)) += r[j] / static_cast<double>(m);
    s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& r : f.rows)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
              (r[i] - mu(static_cast<Eigen::Index>(i))) * (r[j] - mu(static_cast<Eigen::Index>(j))) / static_cast<double>(m - 1);
  };
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd sa, sb;
  stats(a, ma, sa);
  stats(b, mb, sb);
  Eigen::EigenSolver<Eigen::MatrixXd> es(sa * sb, false);
  double tr = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr;
}

// Box area overlap counted on a 1/256 grid; exact for boxes on a 1/64 lattice.
inline double raster_iou(const StrokeBBox& a, const StrokeBBox& b) {
  const int n = 256;
  long inter = 0, uni = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double px = (x + 0.5) / n, py = (y + 0.5) / n;
      const bool ia = px > a.left() && px < a.right() && py > a.top() && py < a.bottom();
      const bool ib = px > b.left() && px < b.right() && py > b.top() && py < b.bottom();
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni == 0 ? (a == b ? 1.0 : 0.0) : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double pairwise_mean_distance(const FeatureSet& a, const FeatureSet& b) {
  long double total = 0;
  for (const auto& x : a.rows)
    for (const auto& y : b.rows) {
      long double s = 0;
      for (std::size_t k = 0; k < x.size(); ++k) s += (static_cast<long double>(x[k]) - y[k]) * (static_cast<long double>(x[k]) - y[k]);
      total += std::sqrt(s);
    }
  return static_cast<double>(total / static_cast<long double>(a.size() * b.size()));
}

/// Lattice boxes: pixel corners on a 64-step grid, so raster_iou is exact.
inline StrokeBBox lattice_box(int x0, int y0, int x1, int y1) {
  return {(x1 - x0) / 128.0, (y1 - y0) / 128.0, (x0 + x1) / 128.0, (y0 + y1) / 128.0};
}

}  // namespace vqsgen::oracle
