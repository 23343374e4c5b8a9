#include "jdsi/mri_model.hpp"

#include "jdsi/error.hpp"
#include "jdsi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace jdsi {

std::size_t SamplingMask::sampled() const
{
  return static_cast<std::size_t>(std::count(omega.begin(), omega.end(), std::uint8_t{1}));
}

double SamplingMask::af_actual() const
{
  auto const n = sampled();
  return n == 0 ? INFINITY : static_cast<double>(omega.size()) / static_cast<double>(n);
}

namespace {

int central_start(int extent, int count) { return extent / 2 - count / 2; }

void check_af(double af)
{
  if (!(af >= 1.0) || !std::isfinite(af)) {
    throw ParameterError("acceleration factor must be a finite value >= 1");
  }
}

void check_af_tolerance(SamplingMask const &m)
{
  double const rel = std::abs(m.af_actual() - m.af_nominal) / m.af_nominal;
  if (rel > 0.1) {
    throw ParameterError(
      "grid too small to realize AF " + std::to_string(m.af_nominal) + " within 10% (got " +
      std::to_string(m.af_actual()) + ")");
  }
}

// Pick k distinct entries of pool uniformly (partial Fisher-Yates).
std::vector<int> choose(std::vector<int> pool, std::size_t k, Rng &rng)
{
  for (std::size_t i = 0; i < k; ++i) {
    auto const j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

} // namespace

bool SamplingMask::in_acs(int y, int x) const
{
  switch (acs.kind) {
  case AcsKind::lines: {
    int const x0 = central_start(width, acs.count);
    return x >= x0 && x < x0 + acs.count;
  }
  case AcsKind::block: {
    int const x0 = central_start(width, acs.count);
    int const y0 = central_start(height, acs.count);
    return x >= x0 && x < x0 + acs.count && y >= y0 && y < y0 + acs.count;
  }
  case AcsKind::none:
    break;
  }
  return false;
}

SamplingMask make_mask_1d(int width, int height, double af, int acs_lines, std::uint64_t seed)
{
  check_af(af);
  if (width < 1 || height < 1) {
    throw ParameterError("mask dimensions must be positive");
  }
  if (acs_lines < 0) {
    throw ParameterError("ACS line count must be non-negative");
  }
  auto const budget = static_cast<int>(std::lround(width / af));
  if (acs_lines > budget) {
    throw ParameterError(
      "ACS lines (" + std::to_string(acs_lines) + ") exceed the column budget (" + std::to_string(budget) + ")");
  }
  SamplingMask m;
  m.height = height;
  m.width = width;
  m.omega.assign(static_cast<std::size_t>(width) * height, 0);
  m.acs = {acs_lines > 0 ? AcsKind::lines : AcsKind::none, acs_lines};
  m.af_nominal = af;
  m.seed = seed;

  std::vector<std::uint8_t> column(width, 0);
  int const x0 = central_start(width, acs_lines);
  for (int x = x0; x < x0 + acs_lines; ++x) {
    column[x] = 1;
  }
  std::vector<int> pool;
  for (int x = 0; x < width; ++x) {
    if (!column[x]) {
      pool.push_back(x);
    }
  }
  Rng rng(seed, "mask-1d");
  for (int x : choose(std::move(pool), budget - acs_lines, rng)) {
    column[x] = 1;
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      m.omega[static_cast<std::size_t>(y) * width + x] = column[x];
    }
  }
  check_af_tolerance(m);
  return m;
}

SamplingMask make_mask_2d(int width, int height, double af, int acs_block, std::uint64_t seed)
{
  check_af(af);
  if (width < 1 || height < 1) {
    throw ParameterError("mask dimensions must be positive");
  }
  if (acs_block < 0 || acs_block > std::min(width, height)) {
    throw ParameterError("ACS block does not fit the grid");
  }
  auto const total = static_cast<long>(width) * height;
  auto const budget = static_cast<long>(std::lround(static_cast<double>(total) / af));
  if (static_cast<long>(acs_block) * acs_block > budget) {
    throw ParameterError("ACS block exceeds the sampling budget");
  }
  SamplingMask m;
  m.height = height;
  m.width = width;
  m.omega.assign(static_cast<std::size_t>(total), 0);
  m.acs = {acs_block > 0 ? AcsKind::block : AcsKind::none, acs_block};
  m.af_nominal = af;
  m.seed = seed;

  std::vector<int> pool;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (m.in_acs(y, x)) {
        m.omega[static_cast<std::size_t>(y) * width + x] = 1;
      } else {
        pool.push_back(y * width + x);
      }
    }
  }
  Rng rng(seed, "mask-2d");
  for (int i : choose(std::move(pool), static_cast<std::size_t>(budget - static_cast<long>(acs_block) * acs_block), rng)) {
    m.omega[static_cast<std::size_t>(i)] = 1;
  }
  check_af_tolerance(m);
  return m;
}

SamplingMask full_mask(int height, int width)
{
  SamplingMask m;
  m.height = height;
  m.width = width;
  m.omega.assign(static_cast<std::size_t>(width) * height, 1);
  m.acs = {AcsKind::lines, width};
  m.af_nominal = 1.0;
  return m;
}

SenseMaps::SenseMaps(int j, int h, int w)
  : coils(j)
  , height(h)
  , width(w)
  , data(static_cast<std::size_t>(j) * h * w)
  , foreground(static_cast<std::size_t>(h) * w, 0)
{
}

CoilStack SenseMaps::as_stack() const
{
  CoilStack s(coils, height, width);
  s.data = data;
  return s;
}

double SenseMaps::max_sos_deviation() const
{
  double worst = 0.0;
  auto const n = plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!foreground[i]) {
      continue;
    }
    double acc = 0.0;
    for (int j = 0; j < coils; ++j) {
      acc += std::norm(at(j, i));
    }
    worst = std::max(worst, std::abs(acc - 1.0));
  }
  return worst;
}

double SenseMaps::max_background() const
{
  double worst = 0.0;
  auto const n = plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    if (foreground[i]) {
      continue;
    }
    for (int j = 0; j < coils; ++j) {
      worst = std::max(worst, std::abs(at(j, i)));
    }
  }
  return worst;
}

SenseMaps normalize_maps(CoilStack const &raw, double eps_rel)
{
  if (!(eps_rel >= 0.0)) {
    throw ParameterError("eps_rel must be non-negative");
  }
  auto const rss = sos(raw);
  double peak = 0.0;
  for (auto const &v : rss.data) {
    peak = std::max(peak, v.real());
  }
  if (peak <= 0.0) {
    throw CalibrationError("empty foreground: coil images are identically zero");
  }
  double const thresh = eps_rel * peak;
  SenseMaps maps(raw.coils, raw.height, raw.width);
  auto const n = raw.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    double const s = rss.data[i].real();
    if (s > 0.0 && s >= thresh) {
      maps.foreground[i] = 1;
      for (int j = 0; j < raw.coils; ++j) {
        maps.at(j, i) = raw.data[j * n + i] / s;
      }
    }
  }
  return maps;
}

namespace {

void check_shapes(SenseMaps const &maps, int h, int w, SamplingMask const &mask)
{
  if (maps.height != h || maps.width != w || mask.height != h || mask.width != w) {
    throw ShapeError("maps, image and mask dimensions disagree");
  }
}

void check_stack(SenseMaps const &maps, CoilStack const &y)
{
  if (y.coils != maps.coils || y.height != maps.height || y.width != maps.width) {
    throw ShapeError("k-space stack does not match the sensitivity maps");
  }
}

} // namespace

void apply_mask(CoilStack &ksp, SamplingMask const &mask)
{
  auto const n = ksp.plane_size();
  if (mask.omega.size() != n) {
    throw ShapeError("mask does not match k-space dimensions");
  }
  for (int j = 0; j < ksp.coils; ++j) {
    auto c = ksp.coil(j);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.omega[i]) {
        c[i] = 0.0;
      }
    }
  }
}

CoilStack sense_forward(SenseMaps const &maps, ComplexImage const &x, SamplingMask const &mask)
{
  check_shapes(maps, x.height, x.width, mask);
  CoilStack y(maps.coils, x.height, x.width);
  auto const n = y.plane_size();
  for (int j = 0; j < maps.coils; ++j) {
    auto c = y.coil(j);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = maps.at(j, i) * x.data[i];
    }
    fft2c_inplace(c, y.height, y.width);
  }
  apply_mask(y, mask);
  return y;
}

ComplexImage sense_adjoint(SenseMaps const &maps, CoilStack const &y, SamplingMask const &mask)
{
  check_shapes(maps, y.height, y.width, mask);
  check_stack(maps, y);
  CoilStack tmp = y;
  apply_mask(tmp, mask);
  ComplexImage x(y.height, y.width);
  auto const n = tmp.plane_size();
  for (int j = 0; j < maps.coils; ++j) {
    auto c = tmp.coil(j);
    ifft2c_inplace(c, tmp.height, tmp.width);
    for (std::size_t i = 0; i < n; ++i) {
      x.data[i] += std::conj(maps.at(j, i)) * c[i];
    }
  }
  return x;
}

ComplexImage sense_normal(SenseMaps const &maps, ComplexImage const &x, SamplingMask const &mask)
{
  return sense_adjoint(maps, sense_forward(maps, x, mask), mask);
}

CoilStack zero_filled(CoilStack const &y, SamplingMask const &mask)
{
  CoilStack tmp = y;
  apply_mask(tmp, mask);
  return ifft2c(tmp);
}

CoilStack data_consistency_kspace(
  ComplexImage const &x_tilde, SenseMaps const &maps, CoilStack const &y, SamplingMask const &mask, double lambda)
{
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ParameterError("data-consistency lambda must be finite and >= 0");
  }
  check_shapes(maps, x_tilde.height, x_tilde.width, mask);
  check_stack(maps, y);
  CoilStack k(maps.coils, x_tilde.height, x_tilde.width);
  auto const n = k.plane_size();
  for (int j = 0; j < maps.coils; ++j) {
    auto c = k.coil(j);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = maps.at(j, i) * x_tilde.data[i];
    }
    fft2c_inplace(c, k.height, k.width);
    auto const yj = y.coil(j);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.omega[i]) {
        c[i] = (c[i] + lambda * yj[i]) / (1.0 + lambda);
      }
    }
  }
  return k;
}

ComplexImage data_consistency(
  ComplexImage const &x_tilde, SenseMaps const &maps, CoilStack const &y, SamplingMask const &mask, double lambda)
{
  CoilStack k = data_consistency_kspace(x_tilde, maps, y, mask, lambda);
  ComplexImage x(k.height, k.width);
  auto const n = k.plane_size();
  for (int j = 0; j < maps.coils; ++j) {
    auto c = k.coil(j);
    ifft2c_inplace(c, k.height, k.width);
    for (std::size_t i = 0; i < n; ++i) {
      x.data[i] += std::conj(maps.at(j, i)) * c[i];
    }
  }
  return x;
}

double data_fidelity(SenseMaps const &maps, ComplexImage const &x, CoilStack const &y, SamplingMask const &mask)
{
  auto r = sense_forward(maps, x, mask);
  check_stack(maps, y);
  auto const n = r.plane_size();
  double acc = 0.0;
  for (int j = 0; j < r.coils; ++j) {
    auto const rj = r.coil(j);
    auto const yj = y.coil(j);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.omega[i]) {
        acc += std::norm(yj[i] - rj[i]);
      }
    }
  }
  return acc;
}

std::string describe(SamplingMask const &mask)
{
  std::ostringstream os;
  os << mask.height << "x" << mask.width << " af=" << mask.af_nominal << " (actual " << mask.af_actual() << ") acs=";
  switch (mask.acs.kind) {
  case AcsKind::none: os << "none"; break;
  case AcsKind::lines: os << mask.acs.count << " lines"; break;
  case AcsKind::block: os << mask.acs.count << "x" << mask.acs.count << " block"; break;
  }
  return os.str();
}

} // namespace jdsi
