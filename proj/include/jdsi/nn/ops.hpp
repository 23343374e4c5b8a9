#pragma once

#include "jdsi/nn/autograd.hpp"
#include "jdsi/nn/threading.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace jdsi::nn {

enum class Mode
{
  train,
  eval
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col[(ci * 9 + ky * 3 + kx), y * w + x] = in[ci, y + ky - 1, x + kx - 1], zero outside.
template <typename T>
void im2col(T const *in, int c, int h, int w, T *col)
{
  std::size_t const hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    T const *src = in + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T *dst = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        int const dy = ky - 1;
        int const dx = kx - 1;
        for (int y = 0; y < h; ++y) {
          int const sy = y + dy;
          T *row = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, T(0));
            continue;
          }
          T const *srow = src + static_cast<std::size_t>(sy) * w;
          int const x0 = std::max(0, -dx);
          int const x1 = std::min(w, w - dx);
          for (int x = 0; x < x0; ++x) {
            row[x] = T(0);
          }
          for (int x = x0; x < x1; ++x) {
            row[x] = srow[x + dx];
          }
          for (int x = x1; x < w; ++x) {
            row[x] = T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(T const *col, int c, int h, int w, T *out)
{
  std::size_t const hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    T *dst = out + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T const *src = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        int const dy = ky - 1;
        int const dx = kx - 1;
        for (int y = 0; y < h; ++y) {
          int const sy = y + dy;
          if (sy < 0 || sy >= h) {
            continue;
          }
          T const *row = src + static_cast<std::size_t>(y) * w;
          T *drow = dst + static_cast<std::size_t>(sy) * w;
          int const x0 = std::max(0, -dx);
          int const x1 = std::min(w, w - dx);
          for (int x = x0; x < x1; ++x) {
            drow[x + dx] += row[x];
          }
        }
      }
    }
  }
}

// Sums in double with independent partial accumulators so the adds pipeline.
template <typename T>
double sum_d(T const *__restrict p, std::size_t n)
{
  double a[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) {
      a[j] += p[i + j];
    }
  }
  for (; i < n; ++i) {
    a[0] += p[i];
  }
  return ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
}

template <typename T>
double dot_d(T const *__restrict p, T const *__restrict q, std::size_t n)
{
  double a[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) {
      a[j] += static_cast<double>(p[i + j]) * q[i + j];
    }
  }
  for (; i < n; ++i) {
    a[0] += static_cast<double>(p[i]) * q[i];
  }
  return ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
}

// y += a * x
template <typename T>
void axpy(std::vector<T> &y, std::vector<T> const &x, T a)
{
  T *__restrict yp = y.data();
  T const *__restrict xp = x.data();
  std::size_t const n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    yp[i] += a * xp[i];
  }
}

inline void warn(std::string const &msg) { std::cerr << "warning: " << msg << '\n'; }

} // namespace detail

/// Same-padded 3x3 cross-correlation. w is Cout x Cin x 3 x 3, b is 1 x Cout x 1 x 1.
template <typename T>
Var<T> conv3x3(Tape<T> &tape, Var<T> const &x, Var<T> const &w, Var<T> const &b)
{
  auto const xs = x->shape();
  auto const ws = w->shape();
  if (ws.c != xs.c || ws.h != 3 || ws.w != 3) {
    throw ShapeError("conv3x3 weight " + ws.str() + " does not match input " + xs.str());
  }
  if (b && b->value.size() != static_cast<std::size_t>(ws.n)) {
    throw ShapeError("conv3x3 bias length does not match output channels");
  }
  int const cin = xs.c;
  int const cout = ws.n;
  int const hw = xs.h * xs.w;
  int const k = cin * 9;
  Tensor<T> out({xs.n, cout, xs.h, xs.w});
  using M = detail::RowMat<T>;
  Eigen::Map<M const> wm(w->value.data.data(), cout, k);

#pragma omp parallel for schedule(static) if (num_threads() > 1)
  for (int n = 0; n < xs.n; ++n) {
    std::vector<T> col(static_cast<std::size_t>(k) * hw);
    detail::im2col(x->value.plane(n, 0), cin, xs.h, xs.w, col.data());
    Eigen::Map<M const> cm(col.data(), k, hw);
    Eigen::Map<M> om(out.plane(n, 0), cout, hw);
    om.noalias() = wm * cm;
    if (b) {
      for (int co = 0; co < cout; ++co) {
        om.row(co).array() += b->value.data[co];
      }
    }
  }

  return tape.record(std::move(out), {x, w, b}, [x, w, b, cin, cout, hw, k](Node<T> &self) {
    auto const xs = x->shape();
    using M = detail::RowMat<T>;
    Eigen::Map<M const> wm(w->value.data.data(), cout, k);
    auto *gx = grad_of(x);
    auto *gw = grad_of(w);
    auto *gb = grad_of(b);
    std::vector<std::vector<T>> gw_parts(gw ? xs.n : 0);
#pragma omp parallel for schedule(static) if (num_threads() > 1)
    for (int n = 0; n < xs.n; ++n) {
      Eigen::Map<M const> gm(self.grad.data() + static_cast<std::size_t>(n) * cout * hw, cout, hw);
      std::vector<T> col(static_cast<std::size_t>(k) * hw);
      if (gw) {
        detail::im2col(x->value.plane(n, 0), cin, xs.h, xs.w, col.data());
        Eigen::Map<M const> cm(col.data(), k, hw);
        gw_parts[n].resize(static_cast<std::size_t>(cout) * k);
        Eigen::Map<M> gwn(gw_parts[n].data(), cout, k);
        gwn.noalias() = gm * cm.transpose();
      }
      if (gx) {
        Eigen::Map<M> dcol(col.data(), k, hw);
        dcol.noalias() = wm.transpose() * gm;
        detail::col2im_add(col.data(), cin, xs.h, xs.w, gx->data() + static_cast<std::size_t>(n) * cin * hw);
      }
    }
    // fixed-order reduction over the batch
    if (gw) {
      for (int n = 0; n < xs.n; ++n) {
        for (std::size_t i = 0; i < gw_parts[n].size(); ++i) {
          (*gw)[i] += gw_parts[n][i];
        }
      }
    }
    if (gb) {
      for (int n = 0; n < xs.n; ++n) {
        for (int co = 0; co < cout; ++co) {
          T const *g = self.grad.data() + (static_cast<std::size_t>(n) * cout + co) * hw;
          (*gb)[co] += static_cast<T>(detail::sum_d(g, static_cast<std::size_t>(hw)));
        }
      }
    }
  });
}

/// Per-channel batch normalization. Train mode normalizes with the batch
/// statistics and folds them into the running estimates (momentum 0.9);
/// eval mode uses the running estimates.
template <typename T>
Var<T> batchnorm(
  Tape<T> &tape,
  Var<T> const &x,
  Var<T> const &scale,
  Var<T> const &shift,
  Tensor<T> &running_mean,
  Tensor<T> &running_var,
  Mode mode,
  T eps = T(1e-5),
  T momentum = T(0.9))
{
  auto const s = x->shape();
  if (scale->value.size() != static_cast<std::size_t>(s.c) || shift->value.size() != static_cast<std::size_t>(s.c) ||
      running_mean.size() != static_cast<std::size_t>(s.c) || running_var.size() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("batchnorm parameters do not match channel count");
  }
  std::size_t const hw = s.plane();
  std::size_t const m = static_cast<std::size_t>(s.n) * hw;
  if (mode == Mode::train && m < 2) {
    throw ParameterError("batchnorm in train mode needs at least two values per channel");
  }
  std::vector<T> mean(s.c), invstd(s.c);
  for (int c = 0; c < s.c; ++c) {
    if (mode == Mode::train) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        acc += detail::sum_d(x->value.plane(n, c), hw);
      }
      double const mu = acc / static_cast<double>(m);
      double var = 0.0;
      for (int n = 0; n < s.n; ++n) {
        T const *p = x->value.plane(n, c);
        double a[8] = {};
        std::size_t i = 0;
        for (; i + 8 <= hw; i += 8) {
          for (int j = 0; j < 8; ++j) {
            double const d = p[i + j] - mu;
            a[j] += d * d;
          }
        }
        for (; i < hw; ++i) {
          double const d = p[i] - mu;
          a[0] += d * d;
        }
        var += ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
      }
      double const biased = var / static_cast<double>(m);
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(biased + eps));
      running_mean.data[c] = momentum * running_mean.data[c] + (T(1) - momentum) * static_cast<T>(mu);
      running_var.data[c] =
        momentum * running_var.data[c] + (T(1) - momentum) * static_cast<T>(var / static_cast<double>(m - 1));
    } else {
      mean[c] = running_mean.data[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.data[c]) + eps));
    }
  }
  Tensor<T> xhat(s);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      T const *p = x->value.plane(n, c);
      T *q = xhat.plane(n, c);
      T *o = out.plane(n, c);
      T const g = scale->value.data[c];
      T const bt = shift->value.data[c];
      for (std::size_t i = 0; i < hw; ++i) {
        q[i] = (p[i] - mean[c]) * invstd[c];
        o[i] = g * q[i] + bt;
      }
    }
  }
  bool const train = mode == Mode::train;
  return tape.record(
    std::move(out), {x, scale, shift}, [x, scale, shift, xhat = std::move(xhat), invstd, train, hw, m](Node<T> &self) {
      auto const s = x->shape();
      auto *gx = grad_of(x);
      auto *gs = grad_of(scale);
      auto *gb = grad_of(shift);
      for (int c = 0; c < s.c; ++c) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (int n = 0; n < s.n; ++n) {
          std::size_t const off = (static_cast<std::size_t>(n) * s.c + c) * hw;
          T const *__restrict up = self.grad.data() + off;
          T const *__restrict xh = xhat.data.data() + off;
          sum_g += detail::sum_d(up, hw);
          sum_gx += detail::dot_d(up, xh, hw);
        }
        if (gs) {
          (*gs)[c] += static_cast<T>(sum_gx);
        }
        if (gb) {
          (*gb)[c] += static_cast<T>(sum_g);
        }
        if (!gx) {
          continue;
        }
        T const g = scale->value.data[c];
        double const md = static_cast<double>(m);
        // d/dx of (x - mean) * invstd; batch statistics add the two mean terms
        T const k0 = static_cast<T>(g * invstd[c]);
        T const k1 = train ? static_cast<T>(g * sum_g / md * invstd[c]) : T(0);
        T const k2 = train ? static_cast<T>(g * sum_gx / md * invstd[c]) : T(0);
        for (int n = 0; n < s.n; ++n) {
          std::size_t const off = (static_cast<std::size_t>(n) * s.c + c) * hw;
          T const *__restrict up = self.grad.data() + off;
          T const *__restrict xh = xhat.data.data() + off;
          T *__restrict out = gx->data() + off;
          for (std::size_t i = 0; i < hw; ++i) {
            out[i] += k0 * up[i] - k1 - k2 * xh[i];
          }
        }
      }
    });
}

template <typename T>
Var<T> relu(Tape<T> &tape, Var<T> const &x)
{
  Tensor<T> out = x->value;
  for (auto &v : out.data) {
    v = v > T(0) ? v : T(0);
  }
  return tape.record(std::move(out), {x}, [x](Node<T> &self) {
    if (auto *gx = grad_of(x)) {
      T *__restrict g = gx->data();
      T const *__restrict up = self.grad.data();
      T const *__restrict xv = x->value.data.data();
      std::size_t const n = self.grad.size();
      for (std::size_t i = 0; i < n; ++i) {
        g[i] += xv[i] > T(0) ? up[i] : T(0);
      }
    }
  });
}

namespace detail {
template <typename T>
T clamp_threshold(Var<T> const &rho)
{
  if (rho->value.size() != 1) {
    throw ShapeError("soft-threshold level must be a scalar");
  }
  T r = rho->value.data[0];
  if (r < T(0)) {
    warn("negative soft-threshold level clamped to 0");
    r = T(0);
  }
  return r;
}
} // namespace detail

/// Real elementwise soft threshold sign(x) max(|x| - rho, 0) with a learnable scalar rho.
template <typename T>
Var<T> softthresh(Tape<T> &tape, Var<T> const &x, Var<T> const &rho)
{
  T const r = detail::clamp_threshold(rho);
  bool const clamped = rho->value.data[0] < T(0);
  Tensor<T> out = x->value;
  for (auto &v : out.data) {
    T const a = std::abs(v);
    v = a > r ? (v > T(0) ? a - r : r - a) : T(0);
  }
  return tape.record(std::move(out), {x, rho}, [x, rho, r, clamped](Node<T> &self) {
    auto *gx = grad_of(x);
    auto *gr = clamped ? nullptr : grad_of(rho);
    double acc = 0.0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      T const v = x->value.data[i];
      if (std::abs(v) > r) {
        if (gx) {
          (*gx)[i] += self.grad[i];
        }
        acc -= (v > T(0) ? 1.0 : -1.0) * self.grad[i];
      }
    }
    if (gr) {
      (*gr)[0] += static_cast<T>(acc);
    }
  });
}

/// Soft threshold on channel pairs read as complex numbers (re, im):
/// max(|z| - rho, 0) z / |z|, with 0 at z = 0.
template <typename T>
Var<T> softthresh_complex(Tape<T> &tape, Var<T> const &x, Var<T> const &rho)
{
  auto const s = x->shape();
  if (s.c % 2 != 0) {
    throw ShapeError("complex soft threshold needs an even channel count");
  }
  T const r = detail::clamp_threshold(rho);
  bool const clamped = rho->value.data[0] < T(0);
  Tensor<T> out(s);
  std::size_t const hw = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; c += 2) {
      T const *re = x->value.plane(n, c);
      T const *im = x->value.plane(n, c + 1);
      T *ore = out.plane(n, c);
      T *oim = out.plane(n, c + 1);
      for (std::size_t i = 0; i < hw; ++i) {
        T const mag = std::hypot(re[i], im[i]);
        T const f = mag > r && mag > T(0) ? (mag - r) / mag : T(0);
        ore[i] = f * re[i];
        oim[i] = f * im[i];
      }
    }
  }
  return tape.record(std::move(out), {x, rho}, [x, rho, r, clamped](Node<T> &self) {
    auto const s = x->shape();
    std::size_t const hw = s.plane();
    auto *gx = grad_of(x);
    auto *gr = clamped ? nullptr : grad_of(rho);
    double acc = 0.0;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; c += 2) {
        std::size_t const o0 = (static_cast<std::size_t>(n) * s.c + c) * hw;
        std::size_t const o1 = o0 + hw;
        for (std::size_t i = 0; i < hw; ++i) {
          T const a = x->value.data[o0 + i];
          T const b = x->value.data[o1 + i];
          T const mag = std::hypot(a, b);
          if (!(mag > r) || mag == T(0)) {
            continue;
          }
          T const ua = a / mag;
          T const ub = b / mag;
          T const ga = self.grad[o0 + i];
          T const gb = self.grad[o1 + i];
          T const radial = ua * ga + ub * gb;
          if (gx) {
            // (I - (r/|z|)(I - u u^T)) g
            T const k = r / mag;
            (*gx)[o0 + i] += ga - k * (ga - ua * radial);
            (*gx)[o1 + i] += gb - k * (gb - ub * radial);
          }
          acc -= radial;
        }
      }
    }
    if (gr) {
      (*gr)[0] += static_cast<T>(acc);
    }
  });
}

template <typename T>
Var<T> maxpool2(Tape<T> &tape, Var<T> const &x)
{
  auto const s = x->shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("maxpool2 needs even spatial dimensions, got " + s.str());
  }
  Shape const os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<T> out(os);
  std::vector<std::uint32_t> arg(os.size());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      T const *p = x->value.plane(n, c);
      T *q = out.plane(n, c);
      std::size_t const base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      std::size_t const obase = (static_cast<std::size_t>(n) * s.c + c) * os.plane();
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) {
          std::size_t best = static_cast<std::size_t>(2 * y) * s.w + 2 * xx;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              std::size_t const idx = static_cast<std::size_t>(2 * y + dy) * s.w + 2 * xx + dx;
              if (p[idx] > p[best]) {
                best = idx;
              }
            }
          }
          q[static_cast<std::size_t>(y) * os.w + xx] = p[best];
          arg[obase + static_cast<std::size_t>(y) * os.w + xx] = static_cast<std::uint32_t>(base + best);
        }
      }
    }
  }
  return tape.record(std::move(out), {x}, [x, arg = std::move(arg)](Node<T> &self) {
    if (auto *gx = grad_of(x)) {
      for (std::size_t i = 0; i < arg.size(); ++i) {
        (*gx)[arg[i]] += self.grad[i];
      }
    }
  });
}

/// Nearest-neighbour 2x upsampling.
template <typename T>
Var<T> upsample2(Tape<T> &tape, Var<T> const &x)
{
  auto const s = x->shape();
  Shape const os{s.n, s.c, s.h * 2, s.w * 2};
  Tensor<T> out(os);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      T const *p = x->value.plane(n, c);
      T *q = out.plane(n, c);
      for (int y = 0; y < os.h; ++y) {
        for (int xx = 0; xx < os.w; ++xx) {
          q[static_cast<std::size_t>(y) * os.w + xx] = p[static_cast<std::size_t>(y / 2) * s.w + xx / 2];
        }
      }
    }
  }
  return tape.record(std::move(out), {x}, [x](Node<T> &self) {
    auto *gx = grad_of(x);
    if (!gx) {
      return;
    }
    auto const s = x->shape();
    int const ow = s.w * 2;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        std::size_t const ib = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
        std::size_t const ob = (static_cast<std::size_t>(n) * s.c + c) * s.plane() * 4;
        for (int y = 0; y < s.h * 2; ++y) {
          for (int xx = 0; xx < ow; ++xx) {
            (*gx)[ib + static_cast<std::size_t>(y / 2) * s.w + xx / 2] +=
              self.grad[ob + static_cast<std::size_t>(y) * ow + xx];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(Tape<T> &tape, Var<T> const &a, Var<T> const &b)
{
  auto const sa = a->shape();
  auto const sb = b->shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  Shape const os{sa.n, sa.c + sb.c, sa.h, sa.w};
  Tensor<T> out(os);
  std::size_t const hw = sa.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a->value.plane(n, 0), sa.c * hw, out.plane(n, 0));
    std::copy_n(b->value.plane(n, 0), sb.c * hw, out.plane(n, sa.c));
  }
  return tape.record(std::move(out), {a, b}, [a, b](Node<T> &self) {
    auto const sa = a->shape();
    auto const sb = b->shape();
    std::size_t const hw = sa.plane();
    auto *ga = grad_of(a);
    auto *gb = grad_of(b);
    for (int n = 0; n < sa.n; ++n) {
      T const *g = self.grad.data() + static_cast<std::size_t>(n) * (sa.c + sb.c) * hw;
      if (ga) {
        T *d = ga->data() + static_cast<std::size_t>(n) * sa.c * hw;
        for (std::size_t i = 0; i < sa.c * hw; ++i) {
          d[i] += g[i];
        }
      }
      if (gb) {
        T *d = gb->data() + static_cast<std::size_t>(n) * sb.c * hw;
        for (std::size_t i = 0; i < sb.c * hw; ++i) {
          d[i] += g[sa.c * hw + i];
        }
      }
    }
  });
}

template <typename T>
Var<T> add(Tape<T> &tape, Var<T> const &a, Var<T> const &b)
{
  if (a->shape() != b->shape()) {
    throw ShapeError("add: " + a->shape().str() + " vs " + b->shape().str());
  }
  Tensor<T> out = a->value;
  detail::axpy(out.data, b->value.data, T(1));
  return tape.record(std::move(out), {a, b}, [a, b](Node<T> &self) {
    for (auto const &p : {a, b}) {
      if (auto *g = grad_of(p)) {
        detail::axpy(*g, self.grad, T(1));
      }
    }
  });
}

template <typename T>
Var<T> sub(Tape<T> &tape, Var<T> const &a, Var<T> const &b)
{
  if (a->shape() != b->shape()) {
    throw ShapeError("sub: " + a->shape().str() + " vs " + b->shape().str());
  }
  Tensor<T> out = a->value;
  detail::axpy(out.data, b->value.data, T(-1));
  return tape.record(std::move(out), {a, b}, [a, b](Node<T> &self) {
    if (auto *g = grad_of(a)) {
      detail::axpy(*g, self.grad, T(1));
    }
    if (auto *g = grad_of(b)) {
      detail::axpy(*g, self.grad, T(-1));
    }
  });
}

/// x times a learnable scalar s.
template <typename T>
Var<T> scale(Tape<T> &tape, Var<T> const &x, Var<T> const &s)
{
  if (s->value.size() != 1) {
    throw ShapeError("scale factor must be a scalar");
  }
  T const k = s->value.data[0];
  Tensor<T> out = x->value;
  for (auto &v : out.data) {
    v *= k;
  }
  return tape.record(std::move(out), {x, s}, [x, s, k](Node<T> &self) {
    if (auto *g = grad_of(x)) {
      detail::axpy(*g, self.grad, k);
    }
    if (auto *g = grad_of(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        acc += static_cast<double>(x->value.data[i]) * self.grad[i];
      }
      (*g)[0] += static_cast<T>(acc);
    }
  });
}

template <typename T>
Var<T> mul_const(Tape<T> &tape, Var<T> const &x, T k)
{
  Tensor<T> out = x->value;
  for (auto &v : out.data) {
    v *= k;
  }
  return tape.record(std::move(out), {x}, [x, k](Node<T> &self) {
    if (auto *g = grad_of(x)) {
      detail::axpy(*g, self.grad, k);
    }
  });
}

template <typename T>
Var<T> sum(Tape<T> &tape, Var<T> const &x)
{
  double const acc = detail::sum_d(x->value.data.data(), x->value.size());
  return tape.record(Tensor<T>({1, 1, 1, 1}, static_cast<T>(acc)), {x}, [x](Node<T> &self) {
    if (auto *g = grad_of(x)) {
      for (auto &v : *g) {
        v += self.grad[0];
      }
    }
  });
}

/// Sum of squares, optionally restricted by a N x 1 x H x W 0/1 mask that is
/// broadcast over channels.
template <typename T>
Var<T> sum_sq(Tape<T> &tape, Var<T> const &x, Tensor<T> const *mask = nullptr)
{
  auto const s = x->shape();
  if (mask && (mask->shape.n != s.n || mask->shape.c != 1 || mask->shape.h != s.h || mask->shape.w != s.w)) {
    throw ShapeError("sum_sq mask must be N x 1 x H x W");
  }
  std::size_t const hw = s.plane();
  std::vector<T> m = mask ? mask->data : std::vector<T>{};
  std::size_t const per_sample = static_cast<std::size_t>(s.c) * hw;
  auto weight = [m = std::move(m), per_sample, hw](std::size_t i) -> T {
    return m.empty() ? T(1) : m[(i / per_sample) * hw + i % hw];
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) {
    double const v = x->value.data[i];
    acc += weight(i) * v * v;
  }
  return tape.record(Tensor<T>({1, 1, 1, 1}, static_cast<T>(acc)), {x}, [x, weight = std::move(weight)](Node<T> &self) {
    if (auto *g = grad_of(x)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] += T(2) * weight(i) * x->value.data[i] * self.grad[0];
      }
    }
  });
}

} // namespace jdsi::nn
