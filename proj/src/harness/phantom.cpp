#include "jdsi/harness/phantom.hpp"

#include "jdsi/error.hpp"
#include "jdsi/rng.hpp"

#include <cmath>
#include <numbers>

namespace jdsi::harness {

bool Ellipse::contains(double u, double v) const
{
  double const t = angle_deg * std::numbers::pi / 180.0;
  double const du = u - cu;
  double const dv = v - cv;
  double const ru = du * std::cos(t) + dv * std::sin(t);
  double const rv = -du * std::sin(t) + dv * std::cos(t);
  return (ru * ru) / (au * au) + (rv * rv) / (av * av) <= 1.0;
}

namespace {

void check_ellipse(Ellipse const &e, char const *what)
{
  if (!(e.intensity >= 0.0 && e.intensity <= 1.5)) {
    throw InvalidInput(std::string(what) + " intensity must lie in [0, 1.5]");
  }
  if (!(e.au > 0.0 && e.av > 0.0)) {
    throw InvalidInput(std::string(what) + " axes must be positive");
  }
  double const r = std::max(e.au, e.av);
  if (std::abs(e.cu) + r > 1.0 + 1e-12 || std::abs(e.cv) + r > 1.0 + 1e-12) {
    throw InvalidInput(std::string(what) + " extends beyond the field of view");
  }
}

double pixel_coord(int i, int n) { return -1.0 + (2.0 * i + 1.0) / n; }

} // namespace

void PhantomSpec::validate() const
{
  if (height < 1 || width < 1) {
    throw InvalidInput("phantom dims must be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidInput("noise_sigma must be finite and >= 0");
  }
  for (auto const &e : ellipses) {
    check_ellipse(e, "ellipse");
  }
  for (auto const &e : lesions) {
    check_ellipse(e, "lesion");
  }
}

PhantomSpec random_phantom(int height, int width, std::uint64_t seed, int lesions, double noise_sigma)
{
  if (lesions < 0) {
    throw InvalidInput("lesion count must be >= 0");
  }
  Rng rng(seed, "phantom");
  PhantomSpec spec;
  spec.height = height;
  spec.width = width;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;

  // painter's-order head: skull, brain, ventricles, small features
  std::vector<Ellipse> const base = {
    {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
    {0.0, -0.0184, 0.6624, 0.874, 0.0, 0.25},
    {0.22, 0.0, 0.11, 0.31, -18.0, 0.08},
    {-0.22, 0.0, 0.16, 0.41, 18.0, 0.08},
    {0.0, 0.35, 0.21, 0.25, 0.0, 0.45},
    {0.0, 0.1, 0.046, 0.046, 0.0, 0.55},
    {0.0, -0.1, 0.046, 0.046, 0.0, 0.55},
    {-0.08, -0.605, 0.046, 0.023, 0.0, 0.55},
    {0.0, -0.606, 0.023, 0.023, 0.0, 0.55},
    {0.06, -0.605, 0.023, 0.046, 0.0, 0.55},
  };
  double const su = rng.uniform(0.85, 1.0);
  double const sv = rng.uniform(0.85, 1.0);
  double const rot = rng.uniform(-10.0, 10.0);
  double const ou = rng.uniform(-0.04, 0.04);
  double const ov = rng.uniform(-0.04, 0.04);
  double const t = rot * std::numbers::pi / 180.0;
  auto place = [&](Ellipse e, double jitter) {
    double const u = e.cu * su + (jitter > 0 ? rng.uniform(-jitter, jitter) : 0.0);
    double const v = e.cv * sv + (jitter > 0 ? rng.uniform(-jitter, jitter) : 0.0);
    e.cu = u * std::cos(t) - v * std::sin(t) + ou;
    e.cv = u * std::sin(t) + v * std::cos(t) + ov;
    e.au *= su;
    e.av *= sv;
    e.angle_deg += rot;
    return e;
  };
  for (std::size_t i = 0; i < base.size(); ++i) {
    Ellipse e = place(base[i], i < 2 ? 0.0 : 0.03);
    e.intensity = std::clamp(e.intensity * rng.uniform(0.8, 1.2), 0.0, 1.5);
    spec.ellipses.push_back(e);
  }
  // a few random blobs inside the brain for texture variety
  int const extra = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < extra; ++i) {
    double const r = 0.45 * std::sqrt(rng.uniform());
    double const a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Ellipse e{r * std::cos(a), 0.8 * r * std::sin(a), rng.uniform(0.04, 0.12), rng.uniform(0.04, 0.12),
              rng.uniform(0.0, 180.0), rng.uniform(0.15, 0.6)};
    spec.ellipses.push_back(place(e, 0.0));
  }
  for (int i = 0; i < lesions; ++i) {
    double const r = 0.4 * std::sqrt(rng.uniform());
    double const a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    bool const bright = rng.uniform() < 0.5;
    Ellipse e{r * std::cos(a), 0.8 * r * std::sin(a), rng.uniform(0.03, 0.07), rng.uniform(0.03, 0.07),
              rng.uniform(0.0, 180.0), bright ? rng.uniform(0.9, 1.3) : rng.uniform(0.0, 0.03)};
    spec.lesions.push_back(place(e, 0.0));
  }
  spec.validate();
  return spec;
}

ComplexImage render(PhantomSpec const &spec)
{
  spec.validate();
  ComplexImage img(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y) {
    double const v = pixel_coord(y, spec.height);
    for (int x = 0; x < spec.width; ++x) {
      double const u = pixel_coord(x, spec.width);
      double val = 0.0;
      for (auto const &e : spec.ellipses) {
        if (e.contains(u, v)) {
          val = e.intensity;
        }
      }
      for (auto const &e : spec.lesions) {
        if (e.contains(u, v)) {
          val = e.intensity;
        }
      }
      img(y, x) = val;
    }
  }
  return img;
}

SenseMaps coil_profiles(int coils, int height, int width, std::uint64_t seed)
{
  if (coils < 1 || height < 1 || width < 1) {
    throw InvalidInput("coil_profiles needs positive coils and dims");
  }
  Rng rng(seed, "coils");
  double const phi0 = rng.uniform(0.0, 2.0 * std::numbers::pi / coils);
  double const radius = rng.uniform(1.0, 1.15);
  double const sigma = rng.uniform(0.2, 0.3);
  double const ramp = rng.uniform(0.5, 1.0);
  CoilStack raw(coils, height, width);
  for (int j = 0; j < coils; ++j) {
    double const th = phi0 + 2.0 * std::numbers::pi * j / coils;
    double const cu = radius * std::cos(th);
    double const cv = radius * std::sin(th);
    auto c = raw.coil(j);
    for (int y = 0; y < height; ++y) {
      double const v = pixel_coord(y, height);
      for (int x = 0; x < width; ++x) {
        double const u = pixel_coord(x, width);
        double const d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
        double const mag = std::exp(-d2 / (2.0 * sigma * sigma));
        double const phase = th + ramp * (u * std::sin(th) - v * std::cos(th));
        c[static_cast<std::size_t>(y) * width + x] = std::polar(mag, phase);
      }
    }
  }
  return normalize_maps(raw, 0.0);
}

Sample synth_sample(PhantomSpec const &spec, int coils)
{
  Sample s;
  s.truth = render(spec);
  s.true_maps = coil_profiles(coils, spec.height, spec.width, spec.seed);
  CoilStack img(coils, spec.height, spec.width);
  std::size_t const hw = img.plane_size();
  for (int j = 0; j < coils; ++j) {
    auto c = img.coil(j);
    for (std::size_t i = 0; i < hw; ++i) {
      c[i] = s.true_maps.at(j, i) * s.truth.data[i];
    }
  }
  s.full_kspace = fft2c(img);
  if (spec.noise_sigma > 0.0) {
    Rng noise(spec.seed, "noise");
    for (auto &v : s.full_kspace.data) {
      double const re = noise.normal();
      double const im = noise.normal();
      v += cx{re, im} * spec.noise_sigma;
    }
  }
  return s;
}

CoilStack coil_images(Sample const &s) { return ifft2c(s.full_kspace); }

} // namespace jdsi::harness
