#pragma once

// Differentiable complex operations on packed real tensors. A complex plane
// occupies two adjacent channels (re, im); a J-coil stack occupies 2J
// channels with coil j at channels 2j and 2j + 1. Gradients are packed the
// same way: g = dL/dRe + i dL/dIm.

#include "jdsi/mri_model.hpp"
#include "jdsi/nn/ops.hpp"

#include <complex>

namespace jdsi::nn {

template <typename T>
Tensor<T> pack(ComplexImage const &img)
{
  Tensor<T> t({1, 2, img.height, img.width});
  for (std::size_t i = 0; i < img.size(); ++i) {
    t.data[i] = static_cast<T>(img.data[i].real());
    t.data[img.size() + i] = static_cast<T>(img.data[i].imag());
  }
  return t;
}

template <typename T>
Tensor<T> pack(CoilStack const &s)
{
  Tensor<T> t({1, 2 * s.coils, s.height, s.width});
  std::size_t const n = s.plane_size();
  for (int j = 0; j < s.coils; ++j) {
    auto const c = s.coil(j);
    for (std::size_t i = 0; i < n; ++i) {
      t.data[(2 * j) * n + i] = static_cast<T>(c[i].real());
      t.data[(2 * j + 1) * n + i] = static_cast<T>(c[i].imag());
    }
  }
  return t;
}

template <typename T>
Tensor<T> pack(SenseMaps const &m)
{
  return pack<T>(m.as_stack());
}

/// Mask as a 1 x 1 x H x W 0/1 tensor.
template <typename T>
Tensor<T> pack(SamplingMask const &m)
{
  Tensor<T> t({1, 1, m.height, m.width});
  for (std::size_t i = 0; i < m.omega.size(); ++i) {
    t.data[i] = m.omega[i] ? T(1) : T(0);
  }
  return t;
}

template <typename T>
Tensor<T> pack_foreground(SenseMaps const &m)
{
  Tensor<T> t({1, 1, m.height, m.width});
  for (std::size_t i = 0; i < m.foreground.size(); ++i) {
    t.data[i] = m.foreground[i] ? T(1) : T(0);
  }
  return t;
}

template <typename T>
ComplexImage unpack_image(Tensor<T> const &t, int n = 0)
{
  if (t.shape.c != 2) {
    throw ShapeError("image tensor must have two channels");
  }
  ComplexImage img(t.shape.h, t.shape.w);
  T const *re = t.plane(n, 0);
  T const *im = t.plane(n, 1);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.data[i] = {static_cast<double>(re[i]), static_cast<double>(im[i])};
  }
  return img;
}

template <typename T>
CoilStack unpack_stack(Tensor<T> const &t, int n = 0)
{
  if (t.shape.c % 2 != 0) {
    throw ShapeError("coil tensor must have an even channel count");
  }
  CoilStack s(t.shape.c / 2, t.shape.h, t.shape.w);
  std::size_t const hw = s.plane_size();
  for (int j = 0; j < s.coils; ++j) {
    T const *re = t.plane(n, 2 * j);
    T const *im = t.plane(n, 2 * j + 1);
    auto c = s.coil(j);
    for (std::size_t i = 0; i < hw; ++i) {
      c[i] = {static_cast<double>(re[i]), static_cast<double>(im[i])};
    }
  }
  return s;
}

/// Maps from a packed tensor; the foreground is where any coil is non-zero.
template <typename T>
SenseMaps unpack_maps(Tensor<T> const &t, int n = 0)
{
  auto const s = unpack_stack(t, n);
  SenseMaps m(s.coils, s.height, s.width);
  m.data = s.data;
  std::size_t const hw = s.plane_size();
  for (std::size_t i = 0; i < hw; ++i) {
    for (int j = 0; j < s.coils; ++j) {
      if (s.data[j * hw + i] != cx{0.0}) {
        m.foreground[i] = 1;
        break;
      }
    }
  }
  return m;
}

/// Concatenate single-sample tensors along the batch axis.
template <typename T>
Tensor<T> batch(std::vector<Tensor<T>> const &items)
{
  if (items.empty()) {
    throw ShapeError("cannot batch an empty list");
  }
  Shape s = items.front().shape;
  for (auto const &it : items) {
    if (it.shape.c != s.c || it.shape.h != s.h || it.shape.w != s.w) {
      throw ShapeError("batch items differ in shape");
    }
  }
  Shape bs{0, s.c, s.h, s.w};
  for (auto const &it : items) {
    bs.n += it.shape.n;
  }
  Tensor<T> out(bs);
  std::size_t off = 0;
  for (auto const &it : items) {
    std::copy(it.data.begin(), it.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += it.size();
  }
  return out;
}

namespace detail {

template <typename T>
struct PairView
{
  T *re;
  T *im;
};

template <typename T>
std::complex<double> get(T const *re, T const *im, std::size_t i)
{
  return {static_cast<double>(re[i]), static_cast<double>(im[i])};
}

template <typename T>
void put_add(std::vector<T> &g, std::size_t o_re, std::size_t o_im, std::size_t i, std::complex<double> v)
{
  g[o_re + i] += static_cast<T>(v.real());
  g[o_im + i] += static_cast<T>(v.imag());
}

inline std::size_t off(Shape const &s, int n, int c) { return (static_cast<std::size_t>(n) * s.c + c) * s.plane(); }

// Centered unitary transform of every channel pair of a packed tensor.
template <typename T>
void transform_pairs(std::vector<T> const &in, std::vector<T> &out, Shape const &s, bool forward, bool accumulate)
{
  std::size_t const hw = s.plane();
  std::vector<cx> plane(hw);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; c += 2) {
      std::size_t const o0 = off(s, n, c);
      std::size_t const o1 = o0 + hw;
      for (std::size_t i = 0; i < hw; ++i) {
        plane[i] = {static_cast<double>(in[o0 + i]), static_cast<double>(in[o1 + i])};
      }
      if (forward) {
        fft2c_inplace(plane, s.h, s.w);
      } else {
        ifft2c_inplace(plane, s.h, s.w);
      }
      for (std::size_t i = 0; i < hw; ++i) {
        if (accumulate) {
          out[o0 + i] += static_cast<T>(plane[i].real());
          out[o1 + i] += static_cast<T>(plane[i].imag());
        } else {
          out[o0 + i] = static_cast<T>(plane[i].real());
          out[o1 + i] = static_cast<T>(plane[i].imag());
        }
      }
    }
  }
}

} // namespace detail

template <typename T>
Var<T> fft2c(Tape<T> &tape, Var<T> const &x)
{
  auto const s = x->shape();
  if (s.c % 2 != 0) {
    throw ShapeError("fft2c needs channel pairs");
  }
  Tensor<T> out(s);
  detail::transform_pairs(x->value.data, out.data, s, true, false);
  return tape.record(std::move(out), {x}, [x](Node<T> &self) {
    if (auto *g = grad_of(x)) {
      detail::transform_pairs(self.grad, *g, x->shape(), false, true);
    }
  });
}

template <typename T>
Var<T> ifft2c(Tape<T> &tape, Var<T> const &x)
{
  auto const s = x->shape();
  if (s.c % 2 != 0) {
    throw ShapeError("ifft2c needs channel pairs");
  }
  Tensor<T> out(s);
  detail::transform_pairs(x->value.data, out.data, s, false, false);
  return tape.record(std::move(out), {x}, [x](Node<T> &self) {
    if (auto *g = grad_of(x)) {
      detail::transform_pairs(self.grad, *g, x->shape(), true, true);
    }
  });
}

/// Per-coil product S_j x: maps N x 2J, image N x 2 -> N x 2J.
template <typename T>
Var<T> cmul_coils(Tape<T> &tape, Var<T> const &maps, Var<T> const &x)
{
  auto const sm = maps->shape();
  auto const sx = x->shape();
  if (sx.c != 2 || sm.n != sx.n || sm.h != sx.h || sm.w != sx.w || sm.c % 2 != 0) {
    throw ShapeError("cmul_coils: maps " + sm.str() + " image " + sx.str());
  }
  std::size_t const hw = sm.plane();
  Tensor<T> out(sm);
  for (int n = 0; n < sm.n; ++n) {
    T const *xr = x->value.plane(n, 0);
    T const *xi = x->value.plane(n, 1);
    for (int c = 0; c < sm.c; c += 2) {
      T const *sr = maps->value.plane(n, c);
      T const *si = maps->value.plane(n, c + 1);
      T *orr = out.plane(n, c);
      T *oi = out.plane(n, c + 1);
      for (std::size_t i = 0; i < hw; ++i) {
        orr[i] = sr[i] * xr[i] - si[i] * xi[i];
        oi[i] = sr[i] * xi[i] + si[i] * xr[i];
      }
    }
  }
  return tape.record(std::move(out), {maps, x}, [maps, x](Node<T> &self) {
    auto const sm = maps->shape();
    std::size_t const hw = sm.plane();
    auto *gm = grad_of(maps);
    auto *gx = grad_of(x);
    for (int n = 0; n < sm.n; ++n) {
      T const *xr = x->value.plane(n, 0);
      T const *xi = x->value.plane(n, 1);
      std::size_t const ox0 = detail::off(x->shape(), n, 0);
      std::size_t const ox1 = ox0 + hw;
      for (int c = 0; c < sm.c; c += 2) {
        T const *sr = maps->value.plane(n, c);
        T const *si = maps->value.plane(n, c + 1);
        std::size_t const o0 = detail::off(sm, n, c);
        std::size_t const o1 = o0 + hw;
        for (std::size_t i = 0; i < hw; ++i) {
          std::complex<double> const g{static_cast<double>(self.grad[o0 + i]), static_cast<double>(self.grad[o1 + i])};
          if (gm) {
            detail::put_add(*gm, o0, o1, i, g * std::conj(detail::get(xr, xi, i)));
          }
          if (gx) {
            detail::put_add(*gx, ox0, ox1, i, g * std::conj(detail::get(sr, si, i)));
          }
        }
      }
    }
  });
}

/// Elementwise complex product of two packed tensors of equal shape.
template <typename T>
Var<T> cmul(Tape<T> &tape, Var<T> const &a, Var<T> const &b)
{
  auto const s = a->shape();
  if (s != b->shape() || s.c % 2 != 0) {
    throw ShapeError("cmul: " + s.str() + " vs " + b->shape().str());
  }
  std::size_t const hw = s.plane();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; c += 2) {
      std::size_t const o0 = detail::off(s, n, c);
      std::size_t const o1 = o0 + hw;
      for (std::size_t i = 0; i < hw; ++i) {
        auto const v = detail::get(&a->value.data[o0], &a->value.data[o1], i) *
                       detail::get(&b->value.data[o0], &b->value.data[o1], i);
        out.data[o0 + i] = static_cast<T>(v.real());
        out.data[o1 + i] = static_cast<T>(v.imag());
      }
    }
  }
  return tape.record(std::move(out), {a, b}, [a, b](Node<T> &self) {
    auto const s = a->shape();
    std::size_t const hw = s.plane();
    auto *ga = grad_of(a);
    auto *gb = grad_of(b);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; c += 2) {
        std::size_t const o0 = detail::off(s, n, c);
        std::size_t const o1 = o0 + hw;
        for (std::size_t i = 0; i < hw; ++i) {
          std::complex<double> const g{static_cast<double>(self.grad[o0 + i]), static_cast<double>(self.grad[o1 + i])};
          if (ga) {
            detail::put_add(*ga, o0, o1, i, g * std::conj(detail::get(&b->value.data[o0], &b->value.data[o1], i)));
          }
          if (gb) {
            detail::put_add(*gb, o0, o1, i, g * std::conj(detail::get(&a->value.data[o0], &a->value.data[o1], i)));
          }
        }
      }
    }
  });
}

/// Coil combination sum_j conj(S_j) z_j: N x 2J, N x 2J -> N x 2.
template <typename T>
Var<T> combine(Tape<T> &tape, Var<T> const &maps, Var<T> const &z)
{
  auto const s = maps->shape();
  if (s != z->shape() || s.c % 2 != 0) {
    throw ShapeError("combine: maps " + s.str() + " coils " + z->shape().str());
  }
  std::size_t const hw = s.plane();
  Shape const os{s.n, 2, s.h, s.w};
  Tensor<T> out(os);
  for (int n = 0; n < s.n; ++n) {
    std::vector<std::complex<double>> acc(hw);
    for (int c = 0; c < s.c; c += 2) {
      std::size_t const o0 = detail::off(s, n, c);
      std::size_t const o1 = o0 + hw;
      for (std::size_t i = 0; i < hw; ++i) {
        acc[i] += std::conj(detail::get(&maps->value.data[o0], &maps->value.data[o1], i)) *
                  detail::get(&z->value.data[o0], &z->value.data[o1], i);
      }
    }
    T *re = out.plane(n, 0);
    T *im = out.plane(n, 1);
    for (std::size_t i = 0; i < hw; ++i) {
      re[i] = static_cast<T>(acc[i].real());
      im[i] = static_cast<T>(acc[i].imag());
    }
  }
  return tape.record(std::move(out), {maps, z}, [maps, z](Node<T> &self) {
    auto const s = maps->shape();
    std::size_t const hw = s.plane();
    auto *gm = grad_of(maps);
    auto *gz = grad_of(z);
    for (int n = 0; n < s.n; ++n) {
      std::size_t const g0 = static_cast<std::size_t>(n) * 2 * hw;
      for (int c = 0; c < s.c; c += 2) {
        std::size_t const o0 = detail::off(s, n, c);
        std::size_t const o1 = o0 + hw;
        for (std::size_t i = 0; i < hw; ++i) {
          std::complex<double> const g{static_cast<double>(self.grad[g0 + i]), static_cast<double>(self.grad[g0 + hw + i])};
          if (gz) {
            detail::put_add(*gz, o0, o1, i, g * detail::get(&maps->value.data[o0], &maps->value.data[o1], i));
          }
          if (gm) {
            detail::put_add(*gm, o0, o1, i, std::conj(g) * detail::get(&z->value.data[o0], &z->value.data[o1], i));
          }
        }
      }
    }
  });
}

/// Multiply every channel by a constant N x 1 x H x W mask.
template <typename T>
Var<T> mask_mul(Tape<T> &tape, Var<T> const &x, Tensor<T> const &mask)
{
  auto const s = x->shape();
  if (mask.shape.n != s.n || mask.shape.c != 1 || mask.shape.h != s.h || mask.shape.w != s.w) {
    throw ShapeError("mask_mul: mask " + mask.shape.str() + " input " + s.str());
  }
  std::size_t const hw = s.plane();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    T const *m = mask.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      T const *p = x->value.plane(n, c);
      T *q = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        q[i] = p[i] * m[i];
      }
    }
  }
  return tape.record(std::move(out), {x}, [x, mask](Node<T> &self) {
    if (auto *g = grad_of(x)) {
      auto const s = x->shape();
      std::size_t const hw = s.plane();
      for (int n = 0; n < s.n; ++n) {
        T const *m = mask.plane(n, 0);
        for (int c = 0; c < s.c; ++c) {
          std::size_t const o = detail::off(s, n, c);
          for (std::size_t i = 0; i < hw; ++i) {
            (*g)[o + i] += self.grad[o + i] * m[i];
          }
        }
      }
    }
  });
}

/// k-space blend: (K + lambda y) / (1 + lambda) on the mask, K elsewhere.
/// A negative lambda is treated as 0.
template <typename T>
Var<T> dc_blend(Tape<T> &tape, Var<T> const &k, Tensor<T> const &y, Tensor<T> const &mask, Var<T> const &lambda)
{
  auto const s = k->shape();
  if (y.shape != s || mask.shape.n != s.n || mask.shape.c != 1 || mask.shape.h != s.h || mask.shape.w != s.w) {
    throw ShapeError("dc_blend: k-space " + s.str() + " data " + y.shape.str() + " mask " + mask.shape.str());
  }
  if (lambda->value.size() != 1) {
    throw ShapeError("dc_blend lambda must be a scalar");
  }
  double const lam = std::max(0.0, static_cast<double>(lambda->value.data[0]));
  bool const clamped = lambda->value.data[0] < T(0);
  std::size_t const hw = s.plane();
  Tensor<T> out = k->value;
  for (int n = 0; n < s.n; ++n) {
    T const *m = mask.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      std::size_t const o = detail::off(s, n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        if (m[i] != T(0)) {
          out.data[o + i] = static_cast<T>((k->value.data[o + i] + lam * y.data[o + i]) / (1.0 + lam));
        }
      }
    }
  }
  return tape.record(std::move(out), {k, lambda}, [k, y, mask, lambda, lam, clamped](Node<T> &self) {
    auto const s = k->shape();
    std::size_t const hw = s.plane();
    auto *gk = grad_of(k);
    auto *gl = clamped ? nullptr : grad_of(lambda);
    double acc = 0.0;
    double const inv = 1.0 / (1.0 + lam);
    for (int n = 0; n < s.n; ++n) {
      T const *m = mask.plane(n, 0);
      for (int c = 0; c < s.c; ++c) {
        std::size_t const o = detail::off(s, n, c);
        for (std::size_t i = 0; i < hw; ++i) {
          double const g = self.grad[o + i];
          if (m[i] != T(0)) {
            if (gk) {
              (*gk)[o + i] += static_cast<T>(g * inv);
            }
            acc += g * (static_cast<double>(y.data[o + i]) - k->value.data[o + i]);
          } else if (gk) {
            (*gk)[o + i] += self.grad[o + i];
          }
        }
      }
    }
    if (gl) {
      (*gl)[0] += static_cast<T>(acc * inv * inv);
    }
  });
}

/// Divide each coil by the pixelwise SoS. Pixels whose SoS falls below
/// eps_rel times the per-sample maximum are set to zero in every coil.
template <typename T>
Var<T> sos_normalize(Tape<T> &tape, Var<T> const &maps, double eps_rel = 1e-6)
{
  auto const s = maps->shape();
  if (s.c % 2 != 0) {
    throw ShapeError("sos_normalize needs channel pairs");
  }
  std::size_t const hw = s.plane();
  std::vector<double> norm(static_cast<std::size_t>(s.n) * hw, 0.0);
  for (int n = 0; n < s.n; ++n) {
    double peak = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      double acc = 0.0;
      for (int c = 0; c < s.c; ++c) {
        double const v = maps->value.plane(n, c)[i];
        acc += v * v;
      }
      norm[n * hw + i] = std::sqrt(acc);
      peak = std::max(peak, norm[n * hw + i]);
    }
    double const thresh = eps_rel * peak;
    for (std::size_t i = 0; i < hw; ++i) {
      double &v = norm[n * hw + i];
      if (!(v > 0.0 && v >= thresh)) {
        v = 0.0; // off the foreground
      }
    }
  }
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      T const *p = maps->value.plane(n, c);
      T *q = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        double const v = norm[n * hw + i];
        q[i] = v > 0.0 ? static_cast<T>(p[i] / v) : T(0);
      }
    }
  }
  Tensor<T> unit = out;
  return tape.record(std::move(out), {maps}, [maps, norm = std::move(norm), unit = std::move(unit)](Node<T> &self) {
    auto *g = grad_of(maps);
    if (!g) {
      return;
    }
    auto const s = maps->shape();
    std::size_t const hw = s.plane();
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < hw; ++i) {
        double const v = norm[n * hw + i];
        if (v == 0.0) {
          continue;
        }
        double radial = 0.0;
        for (int c = 0; c < s.c; ++c) {
          std::size_t const o = detail::off(s, n, c) + i;
          radial += static_cast<double>(unit.data[o]) * self.grad[o];
        }
        for (int c = 0; c < s.c; ++c) {
          std::size_t const o = detail::off(s, n, c) + i;
          (*g)[o] += static_cast<T>((self.grad[o] - unit.data[o] * radial) / v);
        }
      }
    }
  });
}

} // namespace jdsi::nn
