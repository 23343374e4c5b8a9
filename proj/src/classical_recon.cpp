#include "jdsi/classical_recon.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

namespace jdsi::recon {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void axpy(cx a, std::vector<cx> const &x, std::vector<cx> &y)
{
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] += a * x[i];
  }
}

bool all_finite(std::vector<cx> const &v)
{
  for (auto const &z : v) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      return false;
    }
  }
  return true;
}

} // namespace

void write_iterlog_csv(std::ostream &os, std::vector<IterLog> const &log)
{
  os << "iteration,objective,residual,seconds\n";
  auto const prec = os.precision(17);
  for (auto const &e : log) {
    os << e.iteration << ',' << e.objective << ',' << e.residual << ',' << e.seconds << '\n';
  }
  os.precision(prec);
}

Haar2D::Haar2D(int height, int width, int levels)
  : height_(height)
  , width_(width)
  , levels_(levels)
{
  int const f = 1 << levels;
  if (levels < 1 || height % f != 0 || width % f != 0) {
    throw ParameterError("Haar transform needs dimensions divisible by 2^levels");
  }
}

namespace {

double const inv_sqrt2 = 1.0 / std::sqrt(2.0);

// One analysis (or synthesis) level on the top-left h x w corner of a row-major
// plane with row stride `stride`.
void haar_level(std::vector<cx> &p, int stride, int h, int w, bool inverse)
{
  std::vector<cx> tmp(static_cast<std::size_t>(std::max(h, w)));
  auto rows = [&] {
    for (int y = 0; y < h; ++y) {
      cx *r = p.data() + static_cast<std::size_t>(y) * stride;
      if (!inverse) {
        for (int i = 0; i < w / 2; ++i) {
          tmp[i] = (r[2 * i] + r[2 * i + 1]) * inv_sqrt2;
          tmp[w / 2 + i] = (r[2 * i] - r[2 * i + 1]) * inv_sqrt2;
        }
      } else {
        for (int i = 0; i < w / 2; ++i) {
          tmp[2 * i] = (r[i] + r[w / 2 + i]) * inv_sqrt2;
          tmp[2 * i + 1] = (r[i] - r[w / 2 + i]) * inv_sqrt2;
        }
      }
      std::copy(tmp.begin(), tmp.begin() + w, r);
    }
  };
  auto cols = [&] {
    for (int x = 0; x < w; ++x) {
      auto at = [&](int y) -> cx & { return p[static_cast<std::size_t>(y) * stride + x]; };
      if (!inverse) {
        for (int i = 0; i < h / 2; ++i) {
          tmp[i] = (at(2 * i) + at(2 * i + 1)) * inv_sqrt2;
          tmp[h / 2 + i] = (at(2 * i) - at(2 * i + 1)) * inv_sqrt2;
        }
      } else {
        for (int i = 0; i < h / 2; ++i) {
          tmp[2 * i] = (at(i) + at(h / 2 + i)) * inv_sqrt2;
          tmp[2 * i + 1] = (at(i) - at(h / 2 + i)) * inv_sqrt2;
        }
      }
      for (int y = 0; y < h; ++y) {
        at(y) = tmp[y];
      }
    }
  };
  if (!inverse) {
    rows();
    cols();
  } else {
    cols();
    rows();
  }
}

} // namespace

ComplexImage Haar2D::forward(ComplexImage const &x) const
{
  if (x.height != height_ || x.width != width_) {
    throw ShapeError("Haar input has the wrong dimensions");
  }
  ComplexImage c = x;
  for (int l = 0; l < levels_; ++l) {
    haar_level(c.data, width_, height_ >> l, width_ >> l, false);
  }
  return c;
}

ComplexImage Haar2D::inverse(ComplexImage const &c) const
{
  if (c.height != height_ || c.width != width_) {
    throw ShapeError("Haar input has the wrong dimensions");
  }
  ComplexImage x = c;
  for (int l = levels_ - 1; l >= 0; --l) {
    haar_level(x.data, width_, height_ >> l, width_ >> l, true);
  }
  return x;
}

cx soft_threshold(cx x, double rho)
{
  double const m = std::abs(x);
  if (m <= rho || m == 0.0) {
    return 0.0;
  }
  return (m - rho) / m * x;
}

double soft_threshold(double x, double rho)
{
  double const m = std::abs(x);
  if (m <= rho) {
    return 0.0;
  }
  return x > 0 ? m - rho : rho - m;
}

CgResult cg_sense(
  CoilStack const &y, SenseMaps const &maps, SamplingMask const &mask, int max_iters, double tol, ComplexImage const *x0)
{
  if (max_iters < 0 || !(tol >= 0.0)) {
    throw ParameterError("cg_sense needs max_iters >= 0 and tol >= 0");
  }
  auto const t0 = Clock::now();
  CgResult res;
  res.x = x0 ? *x0 : ComplexImage(y.height, y.width);

  CoilStack r = y;
  apply_mask(r, mask);
  if (x0) {
    auto const ex = sense_forward(maps, res.x, mask);
    for (std::size_t i = 0; i < r.data.size(); ++i) {
      r.data[i] -= ex.data[i];
    }
  }
  double const bnorm = norm2(sense_adjoint(maps, y, mask).data);
  ComplexImage s = sense_adjoint(maps, r, mask);
  ComplexImage p = s;
  double gamma = norm2_squared(s.data);
  double rnorm = norm2(r.data);
  res.log.push_back({0, 0.5 * rnorm * rnorm, rnorm, since(t0)});
  if (bnorm == 0.0 || std::sqrt(gamma) <= tol * bnorm) {
    return res;
  }
  for (int it = 1; it <= max_iters; ++it) {
    auto const q = sense_forward(maps, p, mask);
    double const qq = norm2_squared(q.data);
    if (qq == 0.0) {
      break;
    }
    double const alpha = gamma / qq;
    axpy(alpha, p.data, res.x.data);
    axpy(-alpha, q.data, r.data);
    s = sense_adjoint(maps, r, mask);
    double const gamma_new = norm2_squared(s.data);
    rnorm = norm2(r.data);
    if (!std::isfinite(gamma_new) || !std::isfinite(rnorm) || !all_finite(res.x.data)) {
      throw DivergenceError("cg_sense produced non-finite iterates at iteration " + std::to_string(it));
    }
    res.log.push_back({it, 0.5 * rnorm * rnorm, rnorm, since(t0)});
    res.iterations = it;
    if (std::sqrt(gamma_new) <= tol * bnorm) {
      break;
    }
    double const beta = gamma_new / gamma;
    gamma = gamma_new;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      p.data[i] = s.data[i] + beta * p.data[i];
    }
  }
  return res;
}

double pfista_objective(
  CoilStack const &y, SenseMaps const &maps, SamplingMask const &mask, Haar2D const &w, ComplexImage const &x,
  double reg_lambda)
{
  double l1 = 0.0;
  if (reg_lambda != 0.0) {
    for (auto const &c : w.forward(x).data) {
      l1 += std::abs(c);
    }
  }
  return 0.5 * data_fidelity(maps, x, y, mask) + reg_lambda * l1;
}

PfistaResult pfista_sense(
  CoilStack const &y, SenseMaps const &maps, SamplingMask const &mask, double reg_lambda, int max_iters)
{
  if (!(reg_lambda >= 0.0) || max_iters < 0) {
    throw ParameterError("pfista_sense needs reg_lambda >= 0 and max_iters >= 0");
  }
  auto const t0 = Clock::now();
  Haar2D const w(y.height, y.width);
  auto prox_grad = [&](ComplexImage const &z) {
    CoilStack g = sense_forward(maps, z, mask);
    for (int j = 0; j < g.coils; ++j) {
      auto gj = g.coil(j);
      auto const yj = y.coil(j);
      for (std::size_t i = 0; i < gj.size(); ++i) {
        gj[i] -= mask.omega[i] ? yj[i] : cx{0.0};
      }
    }
    auto const grad = sense_adjoint(maps, g, mask);
    ComplexImage v = z;
    axpy(-1.0, grad.data, v.data);
    auto c = w.forward(v);
    for (auto &e : c.data) {
      e = soft_threshold(e, reg_lambda);
    }
    return w.inverse(c);
  };

  PfistaResult res;
  res.x = ComplexImage(y.height, y.width);
  ComplexImage z = res.x;
  double t = 1.0;
  double f_old = pfista_objective(y, maps, mask, w, res.x, reg_lambda);
  double const f_init = f_old;
  for (int it = 1; it <= max_iters; ++it) {
    ComplexImage x_new = prox_grad(z);
    double f_new = pfista_objective(y, maps, mask, w, x_new, reg_lambda);
    bool restarted = false;
    if (!(f_new <= f_old)) {
      // Momentum overshot: fall back to a plain proximal step from x.
      x_new = prox_grad(res.x);
      f_new = pfista_objective(y, maps, mask, w, x_new, reg_lambda);
      restarted = true;
    }
    if (!std::isfinite(f_new) || f_new > 10.0 * f_init) {
      res.log.push_back({it, f_new, 0.0, since(t0)});
      throw PfistaDiverged("pfista_sense diverged at iteration " + std::to_string(it), res.log);
    }
    double step = 0.0;
    for (std::size_t i = 0; i < x_new.data.size(); ++i) {
      step += std::norm(x_new.data[i] - res.x.data[i]);
    }
    if (restarted) {
      t = 1.0;
      z = x_new;
    } else {
      double const t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      double const mom = (t - 1.0) / t_new;
      z = x_new;
      for (std::size_t i = 0; i < z.data.size(); ++i) {
        z.data[i] += mom * (x_new.data[i] - res.x.data[i]);
      }
      t = t_new;
    }
    res.x = std::move(x_new);
    f_old = f_new;
    res.log.push_back({it, f_new, std::sqrt(step), since(t0)});
  }
  return res;
}

JsenseResult jsense(
  CoilStack const &y,
  SamplingMask const &mask,
  JsenseOptions const &opts,
  std::optional<SenseMaps> init_maps,
  std::optional<ComplexImage> init_x)
{
  if (opts.outer_iters < 0) {
    throw ParameterError("jsense needs outer_iters >= 0");
  }
  auto const t0 = Clock::now();
  JsenseResult res;
  res.maps = init_maps ? std::move(*init_maps) : calib::acs_lowres_maps(y, mask);
  if (init_x) {
    res.x = std::move(*init_x);
  } else {
    res.x = cg_sense(y, res.maps, mask, opts.cg_iters, opts.cg_tol).x;
  }
  double fid = data_fidelity(res.maps, res.x, y, mask);
  res.log.push_back({0, fid, std::sqrt(fid), since(t0)});

  int const h = y.height;
  int const w = y.width;
  // Each outer iteration refits the maps to the current image and re-solves
  // for the image. A pair that raises the fidelity is discarded; the state
  // then stays put, so later iterations would repeat the same rejected step.
  bool stuck = false;
  for (int it = 1; it <= opts.outer_iters; ++it) {
    if (!stuck) {
      auto const fit = calib::fit_poly_maps(res.x, y, mask, opts.degree);
      res.ridge_used = res.ridge_used || fit.ridge_used;
      auto maps = calib::eval_poly_maps(fit.model, h, w);
      auto x = cg_sense(y, maps, mask, opts.cg_iters, opts.cg_tol).x;
      double const f = data_fidelity(maps, x, y, mask);
      if (!std::isfinite(f)) {
        throw DivergenceError("jsense produced a non-finite fidelity at outer iteration " + std::to_string(it));
      }
      if (f <= fid) {
        res.maps = std::move(maps);
        res.x = std::move(x);
        fid = f;
      } else {
        stuck = true;
      }
    }
    res.log.push_back({it, fid, std::sqrt(fid), since(t0)});
  }
  return res;
}

} // namespace jdsi::recon
