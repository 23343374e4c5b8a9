#include "jdsi/metrics.hpp"

#include "jdsi/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jdsi {

namespace {

void check_pair(ComplexImage const &a, ComplexImage const &b)
{
  if (!a.same_shape(b)) {
    throw ShapeError("metric inputs differ in shape");
  }
  require_finite(a.data, "reconstruction");
  require_finite(b.data, "reference");
}

} // namespace

std::vector<double> magnitude(ComplexImage const &x)
{
  std::vector<double> m(x.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = std::abs(x.data[i]);
  }
  return m;
}

double rlne(ComplexImage const &x_rec, ComplexImage const &x_ref)
{
  check_pair(x_rec, x_ref);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < x_ref.size(); ++i) {
    double const r = std::abs(x_ref.data[i]);
    double const d = std::abs(x_rec.data[i]) - r;
    num += d * d;
    den += r * r;
  }
  if (den == 0.0) {
    throw InvalidInput("rlne reference is identically zero");
  }
  return std::sqrt(num / den);
}

double psnr(ComplexImage const &x_rec, ComplexImage const &x_ref)
{
  check_pair(x_rec, x_ref);
  double peak = 0.0;
  double mse = 0.0;
  for (std::size_t i = 0; i < x_ref.size(); ++i) {
    double const r = std::abs(x_ref.data[i]);
    double const d = std::abs(x_rec.data[i]) - r;
    peak = std::max(peak, r);
    mse += d * d;
  }
  mse /= static_cast<double>(x_ref.size());
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  if (peak == 0.0) {
    throw InvalidInput("psnr reference is identically zero");
  }
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim_real(std::vector<double> const &a, std::vector<double> const &b, int h, int w, double range)
{
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  if (h < win || w < win) {
    throw InvalidInput("ssim needs images of at least 11x11");
  }
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(h) * w) {
    throw ShapeError("ssim inputs do not match the stated size");
  }
  double g[win];
  double gsum = 0.0;
  for (int i = 0; i < win; ++i) {
    double const d = i - win / 2;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    gsum += g[i];
  }
  for (double &v : g) {
    v /= gsum;
  }
  double const c1 = (0.01 * range) * (0.01 * range);
  double const c2 = (0.03 * range) * (0.03 * range);

  // separable filtering, valid region only
  int const oh = h - win + 1;
  int const ow = w - win + 1;
  auto filter = [&](auto const &f) {
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < win; ++k) {
          acc += g[k] * f(static_cast<std::size_t>(y) * w + x + k);
        }
        rows[static_cast<std::size_t>(y) * ow + x] = acc;
      }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int k = 0; k < win; ++k) {
          acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
        }
        out[static_cast<std::size_t>(y) * ow + x] = acc;
      }
    }
    return out;
  };
  auto const mu_a = filter([&](std::size_t i) { return a[i]; });
  auto const mu_b = filter([&](std::size_t i) { return b[i]; });
  auto const aa = filter([&](std::size_t i) { return a[i] * a[i]; });
  auto const bb = filter([&](std::size_t i) { return b[i] * b[i]; });
  auto const ab = filter([&](std::size_t i) { return a[i] * b[i]; });
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    double const va = aa[i] - mu_a[i] * mu_a[i];
    double const vb = bb[i] - mu_b[i] * mu_b[i];
    double const cov = ab[i] - mu_a[i] * mu_b[i];
    double const num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
    double const den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim(ComplexImage const &x_rec, ComplexImage const &x_ref)
{
  check_pair(x_rec, x_ref);
  auto const a = magnitude(x_rec);
  auto const b = magnitude(x_ref);
  double const range = *std::max_element(b.begin(), b.end());
  if (range == 0.0) {
    throw InvalidInput("ssim reference is identically zero");
  }
  return ssim_real(a, b, x_ref.height, x_ref.width, range);
}

MeanStd mean_std(std::vector<double> const &v)
{
  MeanStd r;
  if (v.empty()) {
    return r;
  }
  for (double x : v) {
    r.mean += x;
  }
  r.mean /= static_cast<double>(v.size());
  if (!std::isfinite(r.mean)) {
    r.std = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double acc = 0.0;
  for (double x : v) {
    acc += (x - r.mean) * (x - r.mean);
  }
  r.std = std::sqrt(acc / static_cast<double>(v.size()));
  return r;
}

} // namespace jdsi
