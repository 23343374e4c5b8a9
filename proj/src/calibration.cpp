#include "jdsi/calibration.hpp"

#include "jdsi/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace jdsi::calib {

SenseMaps gt_maps(CoilStack const &full_coil_images, double eps_rel)
{
  return normalize_maps(full_coil_images, eps_rel);
}

namespace {

// Hann weight for sample i of a centered run of n samples.
double hann(int i, int n)
{
  double const t = (i + 0.5) / n - 0.5;
  return 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * t));
}

} // namespace

SenseMaps acs_lowres_maps(CoilStack const &y, SamplingMask const &mask, Taper taper)
{
  if (mask.height != y.height || mask.width != y.width) {
    throw ShapeError("mask does not match k-space dimensions");
  }
  if (mask.acs.kind == AcsKind::none || mask.acs.count <= 0) {
    throw CalibrationError("mask has no ACS region");
  }
  int const h = y.height;
  int const w = y.width;
  int const n = mask.acs.count;
  int const x0 = w / 2 - n / 2;
  int const y0 = h / 2 - n / 2;
  CoilStack low = y;
  for (int j = 0; j < y.coils; ++j) {
    auto c = low.coil(j);
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        auto &v = c[static_cast<std::size_t>(yy) * w + xx];
        if (!mask.in_acs(yy, xx)) {
          v = 0.0;
          continue;
        }
        if (taper == Taper::raised_cosine) {
          double wt = hann(xx - x0, n);
          if (mask.acs.kind == AcsKind::block) {
            wt *= hann(yy - y0, n);
          }
          v *= wt;
        }
      }
    }
  }
  return normalize_maps(ifft2c(low), default_eps_rel);
}

std::vector<double> chebyshev_basis(int degree, int height, int width)
{
  int const d1 = degree + 1;
  auto axis = [&](int extent) {
    std::vector<double> t(static_cast<std::size_t>(d1) * extent);
    for (int i = 0; i < extent; ++i) {
      double const u = extent > 1 ? -1.0 + 2.0 * i / (extent - 1) : 0.0;
      double prev = 1.0;
      double cur = u;
      t[i] = 1.0;
      if (d1 > 1) {
        t[extent + i] = u;
      }
      for (int p = 2; p < d1; ++p) {
        double const next = 2.0 * u * cur - prev;
        t[static_cast<std::size_t>(p) * extent + i] = next;
        prev = cur;
        cur = next;
      }
    }
    return t;
  };
  auto const tx = axis(width);
  auto const ty = axis(height);
  std::size_t const n = static_cast<std::size_t>(height) * width;
  std::vector<double> basis(static_cast<std::size_t>(d1) * d1 * n);
  for (int q = 0; q < d1; ++q) {
    for (int p = 0; p < d1; ++p) {
      double *b = basis.data() + static_cast<std::size_t>(q * d1 + p) * n;
      for (int yy = 0; yy < height; ++yy) {
        for (int xx = 0; xx < width; ++xx) {
          b[static_cast<std::size_t>(yy) * width + xx] =
            tx[static_cast<std::size_t>(p) * width + xx] * ty[static_cast<std::size_t>(q) * height + yy];
        }
      }
    }
  }
  return basis;
}

PolyFit fit_poly_maps(ComplexImage const &x, CoilStack const &y, SamplingMask const &mask, int degree)
{
  if (degree < 0) {
    throw ParameterError("polynomial degree must be non-negative");
  }
  if (!x.same_shape(ComplexImage(y.height, y.width)) || mask.height != y.height || mask.width != y.width) {
    throw ShapeError("image, k-space and mask dimensions disagree");
  }
  if (norm2(x.data) == 0.0) {
    throw CalibrationError("degenerate fit: image is identically zero");
  }
  int const h = y.height;
  int const w = y.width;
  std::size_t const n = static_cast<std::size_t>(h) * w;
  std::vector<std::size_t> omega;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.omega[i]) {
      omega.push_back(i);
    }
  }
  PolyFit fit;
  fit.model.degree = degree;
  fit.model.coils = y.coils;
  int const nb = fit.model.terms();
  fit.model.coeffs.assign(static_cast<std::size_t>(nb) * y.coils, 0.0);

  auto const basis = chebyshev_basis(degree, h, w);
  Eigen::MatrixXcd a(static_cast<Eigen::Index>(omega.size()), nb);
  std::vector<cx> plane(n);
  for (int b = 0; b < nb; ++b) {
    double const *phi = basis.data() + static_cast<std::size_t>(b) * n;
    for (std::size_t i = 0; i < n; ++i) {
      plane[i] = phi[i] * x.data[i];
    }
    fft2c_inplace(plane, h, w);
    for (std::size_t r = 0; r < omega.size(); ++r) {
      a(static_cast<Eigen::Index>(r), b) = plane[omega[r]];
    }
  }
  if (a.norm() == 0.0) {
    throw CalibrationError("degenerate fit: image has no energy on the acquired set");
  }

  Eigen::MatrixXcd const gram = a.adjoint() * a;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(a);
  qr.setThreshold(1e-12);
  bool const full_rank = qr.rank() == nb;
  Eigen::MatrixXcd ridged = gram;
  if (!full_rank) {
    fit.ridge_used = true;
    double const ridge = 1e-10 * gram.diagonal().real().maxCoeff();
    ridged.diagonal().array() += ridge;
  }
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(ridged);

  for (int j = 0; j < y.coils; ++j) {
    auto const yj = y.coil(j);
    Eigen::VectorXcd rhs(static_cast<Eigen::Index>(omega.size()));
    for (std::size_t r = 0; r < omega.size(); ++r) {
      rhs(static_cast<Eigen::Index>(r)) = yj[omega[r]];
    }
    Eigen::VectorXcd c = full_rank ? Eigen::VectorXcd(qr.solve(rhs)) : Eigen::VectorXcd(ldlt.solve(a.adjoint() * rhs));
    Eigen::VectorXcd const ne_rhs = a.adjoint() * rhs;
    double const denom = ne_rhs.norm();
    if (denom > 0.0) {
      double const res = (ridged * c - ne_rhs).norm() / denom;
      fit.normal_residual = std::max(fit.normal_residual, res);
    }
    for (int b = 0; b < nb; ++b) {
      fit.model.coeffs[static_cast<std::size_t>(j) * nb + b] = c(b);
    }
  }
  return fit;
}

CoilStack eval_poly_raw(PolyMapModel const &model, int height, int width)
{
  int const nb = model.terms();
  if (model.coeffs.size() != static_cast<std::size_t>(nb) * model.coils) {
    throw ShapeError("polynomial coefficient count does not match degree and coil count");
  }
  auto const basis = chebyshev_basis(model.degree, height, width);
  CoilStack out(model.coils, height, width);
  std::size_t const n = out.plane_size();
  for (int j = 0; j < model.coils; ++j) {
    auto c = out.coil(j);
    for (int b = 0; b < nb; ++b) {
      cx const coef = model.coeffs[static_cast<std::size_t>(j) * nb + b];
      double const *phi = basis.data() + static_cast<std::size_t>(b) * n;
      for (std::size_t i = 0; i < n; ++i) {
        c[i] += coef * phi[i];
      }
    }
  }
  return out;
}

SenseMaps eval_poly_maps(PolyMapModel const &model, int height, int width, double eps_rel)
{
  return normalize_maps(eval_poly_raw(model, height, width), eps_rel);
}

} // namespace jdsi::calib
