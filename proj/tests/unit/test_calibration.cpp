#include "doctest.h"
#include "support.hpp"

#include "jdsi/calibration.hpp"
#include "jdsi/error.hpp"
#include "jdsi/harness/dataset.hpp"

using namespace jdsi;
using namespace testing;

namespace {

// |<a, b>| / (|a| |b|) over the foreground of `ref`
double coil_correlation(SenseMaps const &est, SenseMaps const &ref, int j)
{
  cx num = 0;
  double na = 0, nb = 0;
  for (std::size_t i = 0; i < ref.plane_size(); ++i) {
    if (!ref.foreground[i]) {
      continue;
    }
    num += std::conj(est.at(j, i)) * ref.at(j, i);
    na += std::norm(est.at(j, i));
    nb += std::norm(ref.at(j, i));
  }
  return std::abs(num) / std::sqrt(na * nb);
}

CoilStack maps_times(SenseMaps const &m, ComplexImage const &x)
{
  CoilStack c(m.coils, m.height, m.width);
  for (int j = 0; j < m.coils; ++j) {
    for (std::size_t i = 0; i < m.plane_size(); ++i) {
      c.data[j * m.plane_size() + i] = m.at(j, i) * x.data[i];
    }
  }
  return c;
}

} // namespace

TEST_CASE("gt maps")
{
  std::mt19937_64 g(31);
  SUBCASE("single real positive coil gives ones")
  {
    CoilStack s(1, 6, 6);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (auto &v : s.data) {
      v = u(g);
    }
    auto const m = calib::gt_maps(s);
    for (auto const &v : m.data) {
      CHECK(std::abs(v - cx(1)) < 1e-15);
    }
  }
  SUBCASE("x2 = i x1 splits the magnitude evenly")
  {
    auto const x = rand_image(5, 5, g);
    CoilStack s(2, 5, 5);
    s.set_coil(0, x);
    ComplexImage ix = x;
    for (auto &v : ix.data) {
      v *= cx(0, 1);
    }
    s.set_coil(1, ix);
    auto const m = calib::gt_maps(s);
    for (auto const &v : m.data) {
      CHECK(std::abs(v) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-14));
    }
  }
  SUBCASE("unit SoS, exact reconstruction and zeroed background")
  {
    auto s = rand_stack(4, 10, 10, g);
    for (int j = 0; j < 4; ++j) {
      s.data[j * 100 + 7] = 0; // one empty pixel
    }
    auto const m = calib::gt_maps(s);
    CHECK(m.max_sos_deviation() < 1e-10);
    CHECK(m.foreground[7] == 0);
    CHECK(m.max_background() == 0.0);
    auto const back = maps_times(m, sos(s));
    CHECK(rel_diff(back.data, s.data) < 1e-12);
  }
  SUBCASE("empty input")
  {
    CHECK_THROWS_AS(calib::gt_maps(CoilStack(2, 4, 4)), CalibrationError);
  }
}

TEST_CASE("ACS low-resolution maps")
{
  std::mt19937_64 g(33);
  SUBCASE("whole-grid ACS without taper equals gt maps")
  {
    auto const coils = rand_stack(3, 8, 8, g);
    auto mask = full_mask(8, 8);
    REQUIRE(mask.acs.kind != AcsKind::none);
    auto const m = calib::acs_lowres_maps(fft2c(coils), mask, calib::Taper::none);
    CHECK(rel_diff(m.data, calib::gt_maps(coils).data) < 1e-12);
  }
  SUBCASE("no ACS region")
  {
    auto const mask = make_mask_1d(16, 16, 4.0, 0, 1);
    CHECK_THROWS_AS(calib::acs_lowres_maps(CoilStack(2, 16, 16), mask), CalibrationError);
  }
  SUBCASE("seeded phantom: unit SoS and close to the true maps")
  {
    harness::CohortConfig cfg;
    auto const s = harness::cohort_sample(cfg, 0);
    auto const mask = harness::sample_mask({false, 4.0, 24}, 64, 64, cfg.seed, 0);
    auto y = s.full_kspace;
    apply_mask(y, mask);
    auto const m = calib::acs_lowres_maps(y, mask);
    CHECK(m.max_sos_deviation() < 1e-8);
    auto const ref = calib::gt_maps(harness::coil_images(s));
    for (int j = 0; j < 4; ++j) {
      CHECK(coil_correlation(m, ref, j) > 0.9);
    }
  }
}

TEST_CASE("polynomial maps")
{
  std::mt19937_64 g(35);
  SUBCASE("degree 0, one coil, full mask recovers the constant")
  {
    auto const x = rand_image(8, 8, g);
    cx const c(0.7, -0.4);
    CoilStack y(1, 8, 8);
    y.set_coil(0, fft2c([&] {
      ComplexImage t = x;
      for (auto &v : t.data) {
        v *= c;
      }
      return t;
    }()));
    auto const fit = calib::fit_poly_maps(x, y, full_mask(8, 8), 0);
    REQUIRE(fit.model.coeffs.size() == 1);
    CHECK(std::abs(fit.model.coeffs[0] - c) < 1e-10);
  }
  SUBCASE("degree 4 self-consistency and refit fixed point")
  {
    int const h = 16, w = 16, deg = 4;
    calib::PolyMapModel model;
    model.degree = deg;
    model.coils = 3;
    for (int k = 0; k < 3 * model.terms(); ++k) {
      model.coeffs.push_back(rand_cx(g) / (1.0 + k % model.terms()));
    }
    auto const raw = calib::eval_poly_raw(model, h, w);
    auto const x = rand_image(h, w, g);
    CoilStack y(3, h, w);
    for (int j = 0; j < 3; ++j) {
      ComplexImage t(h, w);
      for (std::size_t i = 0; i < t.size(); ++i) {
        t.data[i] = raw.data[j * t.size() + i] * x.data[i];
      }
      y.set_coil(j, fft2c(t));
    }
    auto const fit = calib::fit_poly_maps(x, y, full_mask(h, w), deg);
    CHECK(fit.normal_residual < 1e-8);
    auto const back = calib::eval_poly_raw(fit.model, h, w);
    CHECK(rel_diff(back.data, raw.data) < 1e-8);
    CHECK(rel_diff(calib::eval_poly_maps(fit.model, h, w).data, calib::eval_poly_maps(model, h, w).data) < 1e-8);

    // refit on the fitted maps' own data
    for (int j = 0; j < 3; ++j) {
      ComplexImage t(h, w);
      for (std::size_t i = 0; i < t.size(); ++i) {
        t.data[i] = back.data[j * t.size() + i] * x.data[i];
      }
      y.set_coil(j, fft2c(t));
    }
    auto const refit = calib::fit_poly_maps(x, y, full_mask(h, w), deg);
    CHECK(rel_diff(refit.model.coeffs, fit.model.coeffs) < 1e-9);
  }
  SUBCASE("constant single-coil model normalizes to unit magnitude")
  {
    calib::PolyMapModel model;
    model.degree = 0;
    model.coils = 1;
    model.coeffs = {cx(0.3, 0.4)};
    auto const m = calib::eval_poly_maps(model, 6, 6);
    for (auto const &v : m.data) {
      CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(std::arg(v) == doctest::Approx(std::arg(cx(0.3, 0.4))).epsilon(1e-14));
    }
  }
  SUBCASE("degenerate inputs")
  {
    calib::PolyMapModel zero;
    zero.degree = 2;
    zero.coils = 2;
    zero.coeffs.assign(2 * zero.terms(), cx(0));
    CHECK_THROWS_AS(calib::eval_poly_maps(zero, 8, 8), CalibrationError);
    CHECK_THROWS_AS(calib::fit_poly_maps(ComplexImage(8, 8), rand_stack(2, 8, 8, g), full_mask(8, 8), 2), CalibrationError);
  }
  SUBCASE("rank-deficient basis falls back to ridge")
  {
    // one sampled pixel cannot pin (degree+1)^2 coefficients
    auto mask = full_mask(8, 8);
    std::fill(mask.omega.begin(), mask.omega.end(), 0);
    mask.omega[27] = 1;
    mask.acs = {};
    ComplexImage x(8, 8);
    x(3, 3) = 1.0;
    auto const fit = calib::fit_poly_maps(x, rand_stack(1, 8, 8, g), mask, 2);
    CHECK(fit.ridge_used);
  }
}

TEST_CASE("every producer yields unit-SoS maps")
{
  harness::CohortConfig cfg;
  auto const s = harness::cohort_sample(cfg, 3);
  CHECK(s.true_maps.max_sos_deviation() < 1e-8);
  CHECK(calib::gt_maps(harness::coil_images(s)).max_sos_deviation() < 1e-8);
  auto const mask = harness::sample_mask({false, 4.0, 24}, 64, 64, cfg.seed, 3);
  auto y = s.full_kspace;
  apply_mask(y, mask);
  CHECK(calib::acs_lowres_maps(y, mask).max_sos_deviation() < 1e-8);
}
