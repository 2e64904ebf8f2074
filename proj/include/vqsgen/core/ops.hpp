#pragma once

// Elementwise, reduction, linear-algebra and normalization ops over Var.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vqsgen/core/tensor.hpp"

namespace vqsgen {

namespace detail {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

inline bool is_suffix(const Shape& full, const Shape& suf) {
  if (suf.size() > full.size()) return false;
  return std::equal(suf.rbegin(), suf.rend(), full.rbegin());
}

inline std::size_t last_dim(const Var& a) { return a.shape().empty() ? 1 : a.shape().back(); }

}  // namespace detail

/// a + b, where b's shape equals a's shape or a trailing suffix of it.
inline Var add(const Var& a, const Var& b) {
  if (!detail::is_suffix(a.shape(), b.shape())) throw ShapeError("add", a.shape(), b.shape());
  const std::size_t nb = b.size(), outer = a.size() / nb;
  std::vector<double> out(a.vec());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < nb; ++i) out[o * nb + i] += b[i];
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [a, b, nb, outer](detail::Node& n) {
    if (a.requires_grad()) {
      auto& ga = a.node()->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = b.node()->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < nb; ++i) gb[i] += n.grad[o * nb + i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("sub", a.shape(), b.shape());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](detail::Node& n) {
    if (a.requires_grad()) {
      auto& g = a.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul", a.shape(), b.shape());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](detail::Node& n) {
    if (a.requires_grad()) {
      auto& g = a.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  std::vector<double> out(a.vec());
  for (double& x : out) x *= s;
  return detail::make_result("scale", a.shape(), std::move(out), {a}, [a, s](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

inline Var square(const Var& a) { return mul(a, a); }

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return detail::make_result("sum", {1}, {s}, {a}, [a](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (double& x : g) x += n.grad[0];
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Same values, no gradient path (the stop-gradient operator).
inline Var detach(const Var& a) { return Var::from(a.shape(), a.vec(), false); }

inline Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.size()) throw ShapeError("reshape", a.shape(), shape);
  return detail::make_result("reshape", std::move(shape), a.vec(), {a}, [a](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

/// Collapses every axis after the first.
inline Var flatten(const Var& a) { return reshape(a, {a.dim(0), a.size() / a.dim(0)}); }

inline Var relu(const Var& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return detail::make_result("relu", a.shape(), std::move(out), {a}, [a](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (a[i] > 0.0) g[i] += n.grad[i];
  });
}

inline Var sigmoid(const Var& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
  auto y = std::make_shared<std::vector<double>>(out);
  return detail::make_result("sigmoid", a.shape(), std::move(out), {a}, [a, y](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (*y)[i] * (1.0 - (*y)[i]);
  });
}

/// x[..., K] @ w[K, N] -> [..., N]
inline Var matmul(const Var& x, const Var& w) {
  if (w.rank() != 2 || detail::last_dim(x) != w.dim(0)) throw ShapeError("matmul", x.shape(), w.shape());
  const auto K = w.dim(0), N = w.dim(1), M = x.size() / K;
  Shape os = x.shape();
  os.back() = N;
  std::vector<double> out(M * N);
  detail::MapR(out.data(), M, N).noalias() = detail::CMapR(x.vec().data(), M, K) * detail::CMapR(w.vec().data(), K, N);
  return detail::make_result("matmul", std::move(os), std::move(out), {x, w}, [x, w, M, K, N](detail::Node& n) {
    detail::CMapR gy(n.grad.data(), M, N);
    if (x.requires_grad())
      detail::MapR(x.node()->ensure_grad().data(), M, K).noalias() += gy * detail::CMapR(w.vec().data(), K, N).transpose();
    if (w.requires_grad())
      detail::MapR(w.node()->ensure_grad().data(), K, N).noalias() += detail::CMapR(x.vec().data(), M, K).transpose() * gy;
  });
}

/// Fully connected layer: x @ w + b.
inline Var linear(const Var& x, const Var& w, const Var& b) { return add(matmul(x, w), b); }

/// Batched matmul: a[B, M, K] @ b[B, K, N] -> [B, M, N]; leading axes are folded into B.
inline Var bmm(const Var& a, const Var& b) {
  if (a.rank() < 3 || a.rank() != b.rank()) throw ShapeError("bmm", a.shape(), b.shape());
  const std::size_t r = a.rank();
  const auto M = a.dim(r - 2), K = a.dim(r - 1), N = b.dim(r - 1);
  if (b.dim(r - 2) != K || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()))
    throw ShapeError("bmm", a.shape(), b.shape());
  const std::size_t B = a.size() / (M * K);
  Shape os = a.shape();
  os.back() = N;
  std::vector<double> out(B * M * N);
  for (std::size_t i = 0; i < B; ++i)
    detail::MapR(out.data() + i * M * N, M, N).noalias() =
        detail::CMapR(a.vec().data() + i * M * K, M, K) * detail::CMapR(b.vec().data() + i * K * N, K, N);
  return detail::make_result("bmm", std::move(os), std::move(out), {a, b}, [a, b, B, M, K, N](detail::Node& n) {
    for (std::size_t i = 0; i < B; ++i) {
      detail::CMapR gy(n.grad.data() + i * M * N, M, N);
      if (a.requires_grad())
        detail::MapR(a.node()->ensure_grad().data() + i * M * K, M, K).noalias() +=
            gy * detail::CMapR(b.vec().data() + i * K * N, K, N).transpose();
      if (b.requires_grad())
        detail::MapR(b.node()->ensure_grad().data() + i * K * N, K, N).noalias() +=
            detail::CMapR(a.vec().data() + i * M * K, M, K).transpose() * gy;
    }
  });
}

/// Swaps the two trailing axes.
inline Var transpose_last2(const Var& a) {
  if (a.rank() < 2) throw ShapeError("transpose_last2 needs rank >= 2, got " + shape_str(a.shape()));
  const std::size_t r = a.rank(), M = a.dim(r - 2), N = a.dim(r - 1), B = a.size() / (M * N);
  Shape os = a.shape();
  std::swap(os[r - 2], os[r - 1]);
  std::vector<double> out(a.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) out[b * M * N + j * M + i] = a[b * M * N + i * N + j];
  return detail::make_result("transpose", std::move(os), std::move(out), {a}, [a, B, M, N](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) g[b * M * N + i * N + j] += n.grad[b * M * N + j * M + i];
  });
}

/// [A, B, C, D] -> [A, C, B, D]; used to split and merge attention heads.
inline Var swap_axes12(const Var& a) {
  if (a.rank() != 4) throw ShapeError("swap_axes12 needs rank 4, got " + shape_str(a.shape()));
  const auto A = a.dim(0), B = a.dim(1), C = a.dim(2), D = a.dim(3);
  std::vector<double> out(a.size());
  auto src = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * B + j) * C + k) * D; };
  auto dst = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * C + k) * B + j) * D; };
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t j = 0; j < B; ++j)
      for (std::size_t k = 0; k < C; ++k) std::copy_n(a.vec().data() + src(i, j, k), D, out.data() + dst(i, j, k));
  return detail::make_result("swap_axes12", {A, C, B, D}, std::move(out), {a}, [a, A, B, C, D, src, dst](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < A; ++i)
      for (std::size_t j = 0; j < B; ++j)
        for (std::size_t k = 0; k < C; ++k)
          for (std::size_t d = 0; d < D; ++d) g[src(i, j, k) + d] += n.grad[dst(i, j, k) + d];
  });
}

/// Softmax over the last axis.
inline Var softmax(const Var& a) {
  const std::size_t K = detail::last_dim(a), R = a.size() / K;
  auto y = std::make_shared<std::vector<double>>(a.size());
  for (std::size_t r = 0; r < R; ++r) {
    const double* x = a.vec().data() + r * K;
    double* o = y->data() + r * K;
    const double m = *std::max_element(x, x + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += (o[k] = std::exp(x[k] - m));
    for (std::size_t k = 0; k < K; ++k) o[k] /= z;
  }
  return detail::make_result("softmax", a.shape(), *y, {a}, [a, y, K, R](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t r = 0; r < R; ++r) {
      const double* o = y->data() + r * K;
      const double* gy = n.grad.data() + r * K;
      double dot = 0.0;
      for (std::size_t k = 0; k < K; ++k) dot += o[k] * gy[k];
      for (std::size_t k = 0; k < K; ++k) g[r * K + k] += o[k] * (gy[k] - dot);
    }
  });
}

inline Var log_softmax(const Var& a) {
  const std::size_t K = detail::last_dim(a), R = a.size() / K;
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < R; ++r) {
    const double* x = a.vec().data() + r * K;
    const double m = *std::max_element(x, x + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(x[k] - m);
    const double lz = m + std::log(z);
    for (std::size_t k = 0; k < K; ++k) out[r * K + k] = x[k] - lz;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return detail::make_result("log_softmax", a.shape(), std::move(out), {a}, [a, y, K, R](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t r = 0; r < R; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += n.grad[r * K + k];
      for (std::size_t k = 0; k < K; ++k) g[r * K + k] += n.grad[r * K + k] - std::exp((*y)[r * K + k]) * s;
    }
  });
}

/// Layer normalization over the last axis with affine gamma/beta of that width.
inline Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const std::size_t D = detail::last_dim(x), R = x.size() / D;
  if (gamma.size() != D || beta.size() != D) throw ShapeError("layernorm", x.shape(), gamma.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(R);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < R; ++r) {
    const double* xi = x.vec().data() + r * D;
    double mu = 0.0, var = 0.0;
    for (std::size_t d = 0; d < D; ++d) mu += xi[d];
    mu /= static_cast<double>(D);
    for (std::size_t d = 0; d < D; ++d) var += (xi[d] - mu) * (xi[d] - mu);
    var /= static_cast<double>(D);
    (*rstd)[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t d = 0; d < D; ++d) {
      const double h = (xi[d] - mu) * (*rstd)[r];
      (*xhat)[r * D + d] = h;
      out[r * D + d] = h * gamma[d] + beta[d];
    }
  }
  return detail::make_result("layernorm", x.shape(), std::move(out), {x, gamma, beta},
                             [x, gamma, beta, xhat, rstd, D, R](detail::Node& n) {
    for (std::size_t r = 0; r < R; ++r) {
      const double* gy = n.grad.data() + r * D;
      const double* h = xhat->data() + r * D;
      if (gamma.requires_grad()) {
        auto& gg = gamma.node()->ensure_grad();
        for (std::size_t d = 0; d < D; ++d) gg[d] += gy[d] * h[d];
      }
      if (beta.requires_grad()) {
        auto& gb = beta.node()->ensure_grad();
        for (std::size_t d = 0; d < D; ++d) gb[d] += gy[d];
      }
      if (x.requires_grad()) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          const double gh = gy[d] * gamma[d];
          m1 += gh;
          m2 += gh * h[d];
        }
        m1 /= static_cast<double>(D);
        m2 /= static_cast<double>(D);
        auto& gx = x.node()->ensure_grad();
        for (std::size_t d = 0; d < D; ++d) gx[r * D + d] += (*rstd)[r] * (gy[d] * gamma[d] - m1 - h[d] * m2);
      }
    }
  });
}

/// Row lookup: table[V, D] gathered at `indices` -> [indices.size(), D].
inline Var embedding(const Var& table, const std::vector<std::size_t>& indices) {
  if (table.rank() != 2) throw ShapeError("embedding table must be rank 2, got " + shape_str(table.shape()));
  const auto V = table.dim(0), D = table.dim(1);
  std::vector<double> out(indices.size() * D);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= V)
      throw std::out_of_range("embedding: index " + std::to_string(indices[i]) + " >= " + std::to_string(V));
    std::copy_n(table.vec().data() + indices[i] * D, D, out.data() + i * D);
  }
  return detail::make_result("embedding", {indices.size(), D}, std::move(out), {table}, [table, indices, D](detail::Node& n) {
    auto& g = table.node()->ensure_grad();
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t d = 0; d < D; ++d) g[indices[i] * D + d] += n.grad[i * D + d];
  });
}

/// Concatenation along `axis`; all other extents must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero arrays");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> extent;
  for (const Var& p : parts) {
    Shape a = p.shape(), b = s0;
    if (a.size() != b.size()) throw ShapeError("concat", a, b);
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concat", p.shape(), s0);
    extent.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  Shape os = s0;
  os[axis] = total;
  std::vector<double> out(numel(os));
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = extent[k] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(parts[k].vec().data() + o * w, w, out.data() + o * total * inner + off);
    off += w;
  }
  return detail::make_result("concat", std::move(os), std::move(out), parts, [parts, extent, outer, inner, total](detail::Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t w = extent[k] * inner;
      if (parts[k].requires_grad()) {
        auto& g = parts[k].node()->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < w; ++i) g[o * w + i] += n.grad[o * total * inner + off + i];
      }
      off += w;
    }
  });
}

inline Var concat_channels(const Var& a, const Var& b) { return concat({a, b}, 1); }

/// Contiguous sub-range [start, start+len) along `axis`.
inline Var narrow(const Var& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank() || start + len > a.dim(axis))
    throw ShapeError("narrow: range out of bounds for " + shape_str(a.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t full = a.dim(axis) * inner;
  Shape os = a.shape();
  os[axis] = len;
  std::vector<double> out(numel(os));
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.vec().data() + o * full + start * inner, len * inner, out.data() + o * len * inner);
  return detail::make_result("narrow", std::move(os), std::move(out), {a}, [a, outer, inner, full, start, len](detail::Node& n) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < len * inner; ++i) g[o * full + start * inner + i] += n.grad[o * len * inner + i];
  });
}

/// Mean squared error over all elements.
inline Var mse(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse", a.shape(), b.shape());
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return detail::make_result("mse", {1}, {s * inv}, {a, b}, [a, b, inv](detail::Node& n) {
    const double g0 = n.grad[0] * 2.0 * inv;
    if (a.requires_grad()) {
      auto& g = a.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * (a[i] - b[i]);
    }
    if (b.requires_grad()) {
      auto& g = b.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= g0 * (a[i] - b[i]);
    }
  });
}

enum class Reduction { Mean, Sum };

/// Softmax cross-entropy over the last axis of `logits`; target -1 marks an
/// ignored row. Mean averages over non-ignored rows.
inline Var cross_entropy(const Var& logits, const std::vector<int>& targets, Reduction red = Reduction::Mean) {
  const std::size_t K = detail::last_dim(logits), R = logits.size() / K;
  if (targets.size() != R)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(R) + " rows");
  auto prob = std::make_shared<std::vector<double>>(logits.size());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < R; ++r) {
    const double* x = logits.vec().data() + r * K;
    const double m = *std::max_element(x, x + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += ((*prob)[r * K + k] = std::exp(x[k] - m));
    for (std::size_t k = 0; k < K; ++k) (*prob)[r * K + k] /= z;
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= K)
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) + " >= " + std::to_string(K));
    total += m + std::log(z) - x[targets[r]];
    ++count;
  }
  const double norm = (red == Reduction::Mean && count > 0) ? 1.0 / static_cast<double>(count) : 1.0;
  return detail::make_result("cross_entropy", {1}, {total * norm}, {logits}, [logits, targets, prob, K, R, norm](detail::Node& n) {
    auto& g = logits.node()->ensure_grad();
    const double g0 = n.grad[0] * norm;
    for (std::size_t r = 0; r < R; ++r) {
      if (targets[r] < 0) continue;
      for (std::size_t k = 0; k < K; ++k) g[r * K + k] += g0 * (*prob)[r * K + k];
      g[r * K + static_cast<std::size_t>(targets[r])] -= g0;
    }
  });
}

}  // namespace vqsgen
