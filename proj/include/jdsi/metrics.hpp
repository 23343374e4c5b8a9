#pragma once

#include "jdsi/numerics.hpp"

#include <vector>

namespace jdsi {

/// ||x_rec| - |x_ref|||_2 / |||x_ref|||_2 on magnitude images.
double rlne(ComplexImage const &x_rec, ComplexImage const &x_ref);

/// 10 log10(max|x_ref|^2 / MSE) on magnitudes; +infinity for an exact match.
double psnr(ComplexImage const &x_rec, ComplexImage const &x_ref);

/// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5,
/// K1 0.01, K2 0.03, dynamic range max|x_ref|).
double ssim(ComplexImage const &x_rec, ComplexImage const &x_ref);

/// Real-valued variant used by ssim; inputs are row-major h x w.
double ssim_real(std::vector<double> const &a, std::vector<double> const &b, int h, int w, double range);

std::vector<double> magnitude(ComplexImage const &x);

struct MeanStd
{
  double mean = 0.0;
  double std = 0.0; // population standard deviation
};

/// Infinite values (exact PSNR matches) propagate to the mean.
MeanStd mean_std(std::vector<double> const &v);

} // namespace jdsi
