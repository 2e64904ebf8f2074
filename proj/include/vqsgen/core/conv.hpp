#pragma once

// Convolution, transposed convolution and max pooling (1D and 2D) via im2col.
// Layouts are channel-first: 2D inputs are [B, C, H, W], 1D inputs [B, C, L].

#include <limits>

#include "vqsgen/core/ops.hpp"

namespace vqsgen {

namespace detail {

struct ConvGeom {
  std::size_t kh, kw, sh, sw, ph, pw;

  std::size_t out_h(std::size_t h) const { return (h + 2 * ph - kh) / sh + 1; }
  std::size_t out_w(std::size_t w) const { return (w + 2 * pw - kw) / sw + 1; }
  bool fits(std::size_t h, std::size_t w) const { return h + 2 * ph >= kh && w + 2 * pw >= kw; }
};

// Output columns [lo, hi) whose input column x*s + j - p lies inside [0, W).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t W, std::size_t Wo, std::size_t s, std::size_t j, std::size_t p) {
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(p);
  const std::ptrdiff_t st = static_cast<std::ptrdiff_t>(s);
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + st - 1) / st;
  std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(W) - 1 - off < 0 ? 0 : (static_cast<std::ptrdiff_t>(W) - 1 - off) / st + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(Wo));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// img [C, H, W] -> cols [C*kh*kw, Ho*Wo]
inline void im2col(const double* img, std::size_t C, std::size_t H, std::size_t W, const ConvGeom& g, double* cols) {
  const std::size_t Ho = g.out_h(H), Wo = g.out_w(W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * Ho * Wo;
        const auto [lo, hi] = valid_range(W, Wo, g.sw, j, g.pw);
        for (std::size_t y = 0; y < Ho; ++y) {
          double* dst = row + y * Wo;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>((c * H + static_cast<std::size_t>(iy)) * W + j) -
                                      static_cast<std::ptrdiff_t>(g.pw);
          std::fill(dst, dst + lo, 0.0);
          for (std::size_t x = lo; x < hi; ++x) dst[x] = img[base + static_cast<std::ptrdiff_t>(x * g.sw)];
          std::fill(dst + hi, dst + Wo, 0.0);
        }
      }
}

// Adjoint of im2col: accumulates cols back into img.
inline void col2im(const double* cols, std::size_t C, std::size_t H, std::size_t W, const ConvGeom& g, double* img) {
  const std::size_t Ho = g.out_h(H), Wo = g.out_w(W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * Ho * Wo;
        const auto [lo, hi] = valid_range(W, Wo, g.sw, j, g.pw);
        for (std::size_t y = 0; y < Ho; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          const double* src = row + y * Wo;
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>((c * H + static_cast<std::size_t>(iy)) * W + j) -
                                      static_cast<std::ptrdiff_t>(g.pw);
          for (std::size_t x = lo; x < hi; ++x) img[base + static_cast<std::ptrdiff_t>(x * g.sw)] += src[x];
        }
      }
}

// Per-thread reusable column buffers; large fresh allocations cost more in
// page faults than the convolution itself.
inline double* scratch(int slot, std::size_t n) {
  thread_local std::vector<double> buf[2];
  if (buf[slot].size() < n) buf[slot].resize(n);
  return buf[slot].data();
}

inline Var conv_impl(const Var& x, const Var& w, const Var& b, const ConvGeom& g, Shape xs4) {
  const auto B = xs4[0], Cin = xs4[1], H = xs4[2], W = xs4[3];
  const auto Cout = w.dim(0);
  if (w.size() != Cout * Cin * g.kh * g.kw || b.size() != Cout || !g.fits(H, W))
    throw ShapeError("conv", x.shape(), w.shape());
  const std::size_t Ho = g.out_h(H), Wo = g.out_w(W), P = Ho * Wo, KK = Cin * g.kh * g.kw;
  std::vector<double> out(B * Cout * P);
  CMapR wm(w.vec().data(), Cout, KK);
  double* cn = scratch(0, KK * P);
  for (std::size_t n = 0; n < B; ++n) {
    im2col(x.vec().data() + n * Cin * H * W, Cin, H, W, g, cn);
    MapR om(out.data() + n * Cout * P, Cout, P);
    om.noalias() = wm * CMapR(cn, KK, P);
    for (std::size_t c = 0; c < Cout; ++c) om.row(static_cast<Eigen::Index>(c)).array() += b[c];
  }
  Shape os = x.rank() == 3 ? Shape{B, Cout, Wo} : Shape{B, Cout, Ho, Wo};
  return make_result("conv", std::move(os), std::move(out), {x, w, b},
                     [x, w, b, g, B, Cin, H, W, Cout, P, KK](Node& node) {
    // With unit stride and fewer output than input channels, the input
    // gradient is cheaper as a correlation of gy with the flipped kernel.
    const bool flipped = x.requires_grad() && g.sh == 1 && g.sw == 1 && g.ph < g.kh && g.pw < g.kw && Cout < Cin;
    const ConvGeom gf{g.kh, g.kw, 1, 1, g.kh - 1 - g.ph, g.kw - 1 - g.pw};
    const std::size_t KF = Cout * g.kh * g.kw;
    std::vector<double> wf;
    if (flipped) {
      wf.resize(Cin * KF);
      for (std::size_t o = 0; o < Cout; ++o)
        for (std::size_t c = 0; c < Cin; ++c)
          for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j)
              wf[c * KF + (o * g.kh + (g.kh - 1 - i)) * g.kw + (g.kw - 1 - j)] = w[((o * Cin + c) * g.kh + i) * g.kw + j];
    }
    double* cn = scratch(0, std::max(KK * P, flipped ? KF * H * W : 0));
    double* gcols = scratch(1, KK * P);
    for (std::size_t n = 0; n < B; ++n) {
      CMapR gy(node.grad.data() + n * Cout * P, Cout, P);
      if (w.requires_grad()) {
        im2col(x.vec().data() + n * Cin * H * W, Cin, H, W, g, cn);
        MapR(w.node()->ensure_grad().data(), Cout, KK).noalias() += gy * CMapR(cn, KK, P).transpose();
      }
      if (b.requires_grad()) {
        auto& gb = b.node()->ensure_grad();
        const double* gr = node.grad.data() + n * Cout * P;
        for (std::size_t c = 0; c < Cout; ++c)
          for (std::size_t p = 0; p < P; ++p) gb[c] += gr[c * P + p];
      }
      if (flipped) {
        im2col(node.grad.data() + n * Cout * P, Cout, g.out_h(H), g.out_w(W), gf, cn);
        MapR(x.node()->ensure_grad().data() + n * Cin * H * W, Cin, H * W).noalias() += CMapR(wf.data(), Cin, KF) * CMapR(cn, KF, H * W);
      } else if (x.requires_grad()) {
        MapR(gcols, KK, P).noalias() = CMapR(w.vec().data(), Cout, KK).transpose() * gy;
        col2im(gcols, Cin, H, W, g, x.node()->ensure_grad().data() + n * Cin * H * W);
      }
    }
  });
}

inline Var conv_transpose_impl(const Var& x, const Var& w, const Var& b, const ConvGeom& g, Shape xs4) {
  const auto B = xs4[0], Cin = xs4[1], H = xs4[2], W = xs4[3];
  if (w.dim(0) != Cin || b.size() == 0) throw ShapeError("conv_transpose", x.shape(), w.shape());
  const auto Cout = w.dim(1);
  if (w.size() != Cin * Cout * g.kh * g.kw || b.size() != Cout) throw ShapeError("conv_transpose", x.shape(), w.shape());
  const std::size_t Ho = (H - 1) * g.sh + g.kh - 2 * g.ph, Wo = (W - 1) * g.sw + g.kw - 2 * g.pw;
  if (g.out_h(Ho) != H || g.out_w(Wo) != W) throw ShapeError("conv_transpose: inconsistent geometry for " + shape_str(x.shape()));
  const std::size_t P = H * W, KK = Cout * g.kh * g.kw, Q = Ho * Wo;
  std::vector<double> out(B * Cout * Q, 0.0);
  double* cols = scratch(0, KK * P);
  CMapR wm(w.vec().data(), Cin, KK);
  for (std::size_t n = 0; n < B; ++n) {
    MapR(cols, KK, P).noalias() = wm.transpose() * CMapR(x.vec().data() + n * Cin * P, Cin, P);
    double* on = out.data() + n * Cout * Q;
    col2im(cols, Cout, Ho, Wo, g, on);
    for (std::size_t c = 0; c < Cout; ++c)
      for (std::size_t q = 0; q < Q; ++q) on[c * Q + q] += b[c];
  }
  Shape os = x.rank() == 3 ? Shape{B, Cout, Wo} : Shape{B, Cout, Ho, Wo};
  return make_result("conv_transpose", std::move(os), std::move(out), {x, w, b},
                     [x, w, b, g, B, Cin, Cout, Ho, Wo, P, KK, Q](Node& node) {
    double* gcols = scratch(1, KK * P);
    for (std::size_t n = 0; n < B; ++n) {
      const double* gy = node.grad.data() + n * Cout * Q;
      if (b.requires_grad()) {
        auto& gb = b.node()->ensure_grad();
        for (std::size_t c = 0; c < Cout; ++c)
          for (std::size_t q = 0; q < Q; ++q) gb[c] += gy[c * Q + q];
      }
      if (!x.requires_grad() && !w.requires_grad()) continue;
      im2col(gy, Cout, Ho, Wo, g, gcols);
      CMapR gc(gcols, KK, P);
      if (x.requires_grad())
        MapR(x.node()->ensure_grad().data() + n * Cin * P, Cin, P).noalias() += CMapR(w.vec().data(), Cin, KK) * gc;
      if (w.requires_grad())
        MapR(w.node()->ensure_grad().data(), Cin, KK).noalias() += CMapR(x.vec().data() + n * Cin * P, Cin, P) * gc.transpose();
    }
  });
}

inline Var maxpool_impl(const Var& x, const ConvGeom& g, Shape xs4) {
  const auto B = xs4[0], C = xs4[1], H = xs4[2], W = xs4[3];
  if (!g.fits(H, W)) throw ShapeError("maxpool: window larger than input " + shape_str(x.shape()));
  const std::size_t Ho = g.out_h(H), Wo = g.out_w(W);
  std::vector<double> out(B * C * Ho * Wo);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = x.vec().data() + bc * H * W;
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xo = 0; xo < Wo; ++xo) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo * g.sw + j) - static_cast<std::ptrdiff_t>(g.pw);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
            if (src[idx] > best) {
              best = src[idx];
              bi = idx;
            }
          }
        }
        const std::size_t o = (bc * Ho + y) * Wo + xo;
        out[o] = best;
        (*arg)[o] = bc * H * W + bi;
      }
  }
  Shape os = x.rank() == 3 ? Shape{B, C, Wo} : Shape{B, C, Ho, Wo};
  return make_result("maxpool", std::move(os), std::move(out), {x}, [x, arg](Node& node) {
    auto& gx = x.node()->ensure_grad();
    for (std::size_t o = 0; o < arg->size(); ++o) gx[(*arg)[o]] += node.grad[o];
  });
}

inline Shape as4d(const Var& x, const char* op) {
  if (x.rank() == 4) return x.shape();
  if (x.rank() == 3) return {x.dim(0), x.dim(1), 1, x.dim(2)};
  throw ShapeError(std::string(op) + ": expected rank 3 or 4 input, got " + shape_str(x.shape()));
}

}  // namespace detail

/// x[B, Cin, H, W] * w[Cout, Cin, k, k] + b[Cout]
inline Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride = 1, std::size_t pad = 0) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1)) throw ShapeError("conv2d", x.shape(), w.shape());
  return detail::conv_impl(x, w, b, {w.dim(2), w.dim(3), stride, stride, pad, pad}, x.shape());
}

/// x[B, Cin, L] * w[Cout, Cin, k] + b[Cout]
inline Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride = 1, std::size_t pad = 0) {
  if (x.rank() != 3 || w.rank() != 3 || w.dim(1) != x.dim(1)) throw ShapeError("conv1d", x.shape(), w.shape());
  return detail::conv_impl(x, w, b, {1, w.dim(2), 1, stride, 0, pad}, detail::as4d(x, "conv1d"));
}

/// Transposed 2D convolution; w is [Cin, Cout, k, k].
inline Var conv_transpose2d(const Var& x, const Var& w, const Var& b, std::size_t stride = 1, std::size_t pad = 0) {
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv_transpose2d", x.shape(), w.shape());
  return detail::conv_transpose_impl(x, w, b, {w.dim(2), w.dim(3), stride, stride, pad, pad}, x.shape());
}

/// Transposed 1D convolution; w is [Cin, Cout, k].
inline Var conv_transpose1d(const Var& x, const Var& w, const Var& b, std::size_t stride = 1, std::size_t pad = 0) {
  if (x.rank() != 3 || w.rank() != 3) throw ShapeError("conv_transpose1d", x.shape(), w.shape());
  return detail::conv_transpose_impl(x, w, b, {1, w.dim(2), 1, stride, 0, pad}, detail::as4d(x, "conv_transpose1d"));
}

inline Var maxpool2d(const Var& x, std::size_t k, std::size_t stride, std::size_t pad = 0) {
  return detail::maxpool_impl(x, {k, k, stride, stride, pad, pad}, detail::as4d(x, "maxpool2d"));
}

inline Var maxpool1d(const Var& x, std::size_t k, std::size_t stride, std::size_t pad = 0) {
  if (x.rank() != 3) throw ShapeError("maxpool1d expects [B, C, L], got " + shape_str(x.shape()));
  return detail::maxpool_impl(x, {1, k, 1, stride, 0, pad}, detail::as4d(x, "maxpool1d"));
}

}  // namespace vqsgen
