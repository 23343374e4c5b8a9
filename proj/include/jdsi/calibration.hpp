#pragma once

#include "jdsi/mri_model.hpp"

namespace jdsi::calib {

inline constexpr double default_eps_rel = 1e-6;

/// Reference maps: each fully sampled coil image divided by the SoS image.
SenseMaps gt_maps(CoilStack const &full_coil_images, double eps_rel = default_eps_rel);

enum class Taper
{
  none,
  raised_cosine
};

/// Low-resolution maps from the ACS region only.
SenseMaps acs_lowres_maps(CoilStack const &y, SamplingMask const &mask, Taper taper = Taper::raised_cosine);

/// Per-coil tensor-product Chebyshev expansion on [-1, 1]^2.
struct PolyMapModel
{
  int degree = 0;
  int coils = 0;
  std::vector<cx> coeffs; // coil-major, (degree + 1)^2 per coil; index q * (degree + 1) + p for T_p(u) T_q(v)

  int terms() const { return (degree + 1) * (degree + 1); }
};

struct PolyFit
{
  PolyMapModel model;
  bool ridge_used = false;    // basis was rank deficient
  double normal_residual = 0; // worst relative normal-equation residual over coils
};

/// Least-squares fit of coil maps P(c) minimizing ||y_j - U F (P(c_j) x)||^2.
PolyFit fit_poly_maps(ComplexImage const &x, CoilStack const &y, SamplingMask const &mask, int degree);

/// Raw polynomial values on the pixel grid, before SoS normalization.
CoilStack eval_poly_raw(PolyMapModel const &model, int height, int width);

SenseMaps eval_poly_maps(PolyMapModel const &model, int height, int width, double eps_rel = default_eps_rel);

/// Chebyshev basis sampled on an H x W grid, term-major.
std::vector<double> chebyshev_basis(int degree, int height, int width);

} // namespace jdsi::calib
