#pragma once

#include "jdsi/calibration.hpp"
#include "jdsi/error.hpp"
#include "jdsi/mri_model.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace jdsi::recon {

struct IterLog
{
  int iteration = 0;
  double objective = 0.0;
  double residual = 0.0;
  double seconds = 0.0;
};

void write_iterlog_csv(std::ostream &os, std::vector<IterLog> const &log);

/// Orthonormal multi-level Haar transform with periodic boundaries. Needs
/// height and width divisible by 2^levels.
class Haar2D
{
public:
  Haar2D(int height, int width, int levels = 2);

  ComplexImage forward(ComplexImage const &x) const;
  ComplexImage inverse(ComplexImage const &c) const;

private:
  int height_;
  int width_;
  int levels_;
};

/// max(|x| - rho, 0) * x / |x|, with 0 at x = 0.
cx soft_threshold(cx x, double rho);
double soft_threshold(double x, double rho);

struct CgResult
{
  ComplexImage x;
  std::vector<IterLog> log;
  int iterations = 0;
};

/// Least squares min ||y - U F S x|| by conjugate gradients on the normal
/// equations (CGLS form). `residual` in the log is the data residual
/// ||y - E x||, which CGLS keeps non-increasing.
CgResult cg_sense(
  CoilStack const &y,
  SenseMaps const &maps,
  SamplingMask const &mask,
  int max_iters = 50,
  double tol = 1e-6,
  ComplexImage const *x0 = nullptr);

struct PfistaResult
{
  ComplexImage x;
  std::vector<IterLog> log;
};

class PfistaDiverged : public DivergenceError
{
public:
  PfistaDiverged(std::string const &w, std::vector<IterLog> log)
    : DivergenceError(w)
    , log_(std::move(log))
  {
  }
  std::vector<IterLog> const &log() const { return log_; }

private:
  std::vector<IterLog> log_;
};

/// Proximal gradient with momentum for 0.5||y - E x||^2 + reg_lambda ||W x||_1,
/// W the 2-level Haar frame. Unit step; steps that raise the objective are
/// replaced by a plain proximal step and the momentum restarts.
PfistaResult pfista_sense(
  CoilStack const &y, SenseMaps const &maps, SamplingMask const &mask, double reg_lambda, int max_iters = 100);

double pfista_objective(
  CoilStack const &y, SenseMaps const &maps, SamplingMask const &mask, Haar2D const &w, ComplexImage const &x,
  double reg_lambda);

struct JsenseOptions
{
  int outer_iters = 8;
  int degree = 6;
  int cg_iters = 50;
  double cg_tol = 1e-6;
};

struct JsenseResult
{
  ComplexImage x;
  SenseMaps maps;
  std::vector<IterLog> log; // iteration 0 is the initialization; objective is ||y - E x||^2
  bool ridge_used = false;
};

/// Alternating SENSE / polynomial-map refinement. Without initial maps the
/// ACS low-resolution estimate seeds the loop; without an initial image the
/// SENSE solution for the initial maps does.
JsenseResult jsense(
  CoilStack const &y,
  SamplingMask const &mask,
  JsenseOptions const &opts = {},
  std::optional<SenseMaps> init_maps = std::nullopt,
  std::optional<ComplexImage> init_x = std::nullopt);

} // namespace jdsi::recon
