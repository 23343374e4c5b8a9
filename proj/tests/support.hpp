#pragma once

// Shared helpers for the test binaries. Random data comes from std::mt19937
// so fixtures never depend on the library's own generator.

#include "jdsi/mri_model.hpp"
#include "jdsi/nn/autograd.hpp"

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

namespace testing {

using jdsi::cx;

inline cx rand_cx(std::mt19937_64 &g)
{
  std::normal_distribution<double> n(0.0, 1.0);
  double const re = n(g);
  return {re, n(g)};
}

inline jdsi::ComplexImage rand_image(int h, int w, std::mt19937_64 &g)
{
  jdsi::ComplexImage x(h, w);
  for (auto &v : x.data) {
    v = rand_cx(g);
  }
  return x;
}

inline jdsi::CoilStack rand_stack(int j, int h, int w, std::mt19937_64 &g)
{
  jdsi::CoilStack s(j, h, w);
  for (auto &v : s.data) {
    v = rand_cx(g);
  }
  return s;
}

/// Random complex maps scaled pixelwise to unit sum of squares.
inline jdsi::SenseMaps rand_maps(int j, int h, int w, std::mt19937_64 &g)
{
  auto const raw = rand_stack(j, h, w, g);
  jdsi::SenseMaps m(j, h, w);
  std::size_t const hw = raw.plane_size();
  for (std::size_t i = 0; i < hw; ++i) {
    double s = 0.0;
    for (int c = 0; c < j; ++c) {
      s += std::norm(raw.data[c * hw + i]);
    }
    s = std::sqrt(s);
    for (int c = 0; c < j; ++c) {
      m.data[c * hw + i] = raw.data[c * hw + i] / s;
    }
    m.foreground[i] = 1;
  }
  return m;
}

inline jdsi::SamplingMask rand_mask(int h, int w, double p, std::mt19937_64 &g)
{
  auto m = jdsi::full_mask(h, w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto &o : m.omega) {
    o = u(g) < p ? 1 : 0;
  }
  m.acs = {};
  return m;
}

inline cx inner(std::vector<cx> const &a, std::vector<cx> const &b)
{
  cx s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::conj(a[i]) * b[i];
  }
  return s;
}

inline double norm(std::vector<cx> const &a) { return std::sqrt(std::real(inner(a, a))); }

inline double rel_diff(std::vector<cx> const &a, std::vector<cx> const &b)
{
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Centered unitary DFT by direct summation.
inline jdsi::ComplexImage naive_fft2c(jdsi::ComplexImage const &x, bool inverse = false)
{
  int const h = x.height, w = x.width;
  int const ch = h / 2, cw = w / 2;
  double const sgn = inverse ? 1.0 : -1.0;
  jdsi::ComplexImage out(h, w);
  for (int ku = 0; ku < h; ++ku) {
    for (int kv = 0; kv < w; ++kv) {
      cx acc = 0;
      for (int u = 0; u < h; ++u) {
        for (int v = 0; v < w; ++v) {
          double const ph =
            2.0 * M_PI * (static_cast<double>((ku - ch) * (u - ch)) / h + static_cast<double>((kv - cw) * (v - cw)) / w);
          acc += x(u, v) * std::polar(1.0, sgn * ph);
        }
      }
      out(ku, kv) = acc / std::sqrt(static_cast<double>(h) * w);
    }
  }
  return out;
}

/// Central-difference check of d f / d p for every entry of `params`
/// (or a strided subset). Returns the worst relative error
/// |g_fd - g_ad| / max(|g_fd|, |g_ad|, floor).
inline double grad_check(
  std::vector<jdsi::nn::Var<double>> const &params,
  std::function<jdsi::nn::Var<double>(jdsi::nn::Tape<double> &)> const &f,
  double step = 1e-6,
  std::size_t max_per_param = 40,
  double floor = 1e-8)
{
  using namespace jdsi::nn;
  for (auto const &p : params) {
    p->grad.clear();
  }
  {
    Tape<double> tape;
    auto out = f(tape);
    tape.backward(out);
  }
  std::vector<std::vector<double>> ad;
  for (auto const &p : params) {
    ad.push_back(p->grad.empty() ? std::vector<double>(p->value.size(), 0.0) : p->grad);
  }
  auto eval = [&] {
    Tape<double> tape(false);
    return f(tape)->value.data[0];
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto &v = params[k]->value.data;
    std::size_t const stride = std::max<std::size_t>(1, v.size() / max_per_param);
    for (std::size_t i = 0; i < v.size(); i += stride) {
      double const keep = v[i];
      v[i] = keep + step;
      double const up = eval();
      v[i] = keep - step;
      double const dn = eval();
      v[i] = keep;
      double const fd = (up - dn) / (2 * step);
      double const err = std::abs(fd - ad[k][i]) / std::max({std::abs(fd), std::abs(ad[k][i]), floor});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

} // namespace testing
