#include "doctest.h"
#include "support.hpp"

#include "jdsi/nn/complex_ops.hpp"
#include "jdsi/nn/ops.hpp"
#include "jdsi/nn/param_store.hpp"
#include "jdsi/nn/threading.hpp"

using namespace jdsi;
using namespace jdsi::nn;
using testing::grad_check;

namespace {

Tensor<double> rand_tensor(Shape s, std::mt19937_64 &g, double sd = 1.0)
{
  std::normal_distribution<double> n(0.0, sd);
  Tensor<double> t(s);
  for (auto &v : t.data) {
    v = n(g);
  }
  return t;
}

// Scalar probe with a generic gradient: sum((out + c)^2) for a random c.
Var<double> probe(Tape<double> &tape, Var<double> const &out, std::uint64_t seed = 99)
{
  std::mt19937_64 g(seed);
  auto const c = constant(rand_tensor(out->shape(), g));
  return sum_sq<double>(tape, add<double>(tape, out, c));
}

double naive_conv(Tensor<double> const &x, Tensor<double> const &w, Tensor<double> const *b, int n, int co, int u, int v)
{
  double acc = b ? b->data[co] : 0.0;
  for (int ci = 0; ci < x.shape.c; ++ci) {
    for (int du = -1; du <= 1; ++du) {
      for (int dv = -1; dv <= 1; ++dv) {
        int const uu = u + du, vv = v + dv;
        if (uu < 0 || vv < 0 || uu >= x.shape.h || vv >= x.shape.w) {
          continue;
        }
        acc += w.at(co, ci, du + 1, dv + 1) * x.at(n, ci, uu, vv);
      }
    }
  }
  return acc;
}

} // namespace

TEST_CASE("conv3x3 forward")
{
  std::mt19937_64 g(51);
  SUBCASE("identity kernel")
  {
    auto const x = leaf(rand_tensor({2, 3, 5, 4}, g), false);
    Tensor<double> w({3, 3, 3, 3});
    for (int c = 0; c < 3; ++c) {
      w.at(c, c, 1, 1) = 1.0;
    }
    Tape<double> t(false);
    auto const y = conv3x3<double>(t, x, constant(w), nullptr);
    CHECK(y->value.data == x->value.data);
  }
  SUBCASE("zero weights")
  {
    auto const x = leaf(rand_tensor({1, 2, 4, 4}, g), false);
    Tape<double> t(false);
    auto const y = conv3x3<double>(t, x, constant(Tensor<double>({3, 2, 3, 3})), constant(Tensor<double>({1, 3, 1, 1})));
    for (auto v : y->value.data) {
      CHECK(v == 0.0);
    }
    CHECK(y->shape() == Shape{1, 3, 4, 4});
  }
  SUBCASE("scalar-loop oracle")
  {
    auto const x = rand_tensor({1, 2, 5, 5}, g);
    auto const w = rand_tensor({3, 2, 3, 3}, g);
    auto const b = rand_tensor({1, 3, 1, 1}, g);
    Tape<double> t(false);
    auto const y = conv3x3<double>(t, constant(x), constant(w), constant(b));
    double worst = 0;
    for (int co = 0; co < 3; ++co) {
      for (int u = 0; u < 5; ++u) {
        for (int v = 0; v < 5; ++v) {
          worst = std::max(worst, std::abs(y->value.at(0, co, u, v) - naive_conv(x, w, &b, 0, co, u, v)));
        }
      }
    }
    CHECK(worst < 1e-12);
  }
  SUBCASE("channel mismatch")
  {
    Tape<double> t(false);
    CHECK_THROWS_AS(
      conv3x3<double>(t, constant(Tensor<double>({1, 2, 4, 4})), constant(Tensor<double>({3, 4, 3, 3})), nullptr),
      ShapeError);
  }
}

TEST_CASE("conv bias gradient is the pixel count")
{
  Tensor<double> xv({2, 1, 4, 3}, 1.0);
  auto const w = leaf(Tensor<double>({2, 1, 3, 3}), true);
  auto const b = leaf(Tensor<double>({1, 2, 1, 1}), true);
  Tape<double> t;
  auto const y = conv3x3<double>(t, constant(xv), w, b);
  t.backward(sum<double>(t, y));
  CHECK(b->grad[0] == 2.0 * 4 * 3);
  CHECK(b->grad[1] == 2.0 * 4 * 3);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients")
{
  std::mt19937_64 g(52);
  auto const x = leaf(rand_tensor({1, 2, 4, 4}, g), true);
  auto const w = leaf(rand_tensor({2, 2, 3, 3}, g), true);
  Tape<double> t;
  auto const y = relu<double>(t, conv3x3<double>(t, x, w, nullptr));
  t.backward(y, std::vector<double>(y->value.size(), 0.0));
  for (auto v : w->grad) {
    CHECK(v == 0.0);
  }
  for (auto v : x->grad) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("backward without a recorded pass")
{
  Tape<double> t;
  auto const x = leaf(Tensor<double>({1, 1, 1, 1}, 2.0), true);
  CHECK_THROWS_AS(t.backward(x), UsageError);
}

TEST_CASE("batchnorm")
{
  std::mt19937_64 g(53);
  SUBCASE("standardized input passes through")
  {
    auto x = rand_tensor({4, 2, 6, 6}, g);
    for (int c = 0; c < 2; ++c) {
      double m = 0, v = 0;
      for (int n = 0; n < 4; ++n) {
        for (int i = 0; i < 36; ++i) {
          m += x.plane(n, c)[i];
        }
      }
      m /= 144;
      for (int n = 0; n < 4; ++n) {
        for (int i = 0; i < 36; ++i) {
          x.plane(n, c)[i] -= m;
          v += x.plane(n, c)[i] * x.plane(n, c)[i];
        }
      }
      double const sd = std::sqrt(v / 144);
      for (int n = 0; n < 4; ++n) {
        for (int i = 0; i < 36; ++i) {
          x.plane(n, c)[i] /= sd;
        }
      }
    }
    Tensor<double> rm({1, 2, 1, 1}), rv({1, 2, 1, 1}, 1.0);
    Tape<double> t(false);
    auto const y = batchnorm<double>(
      t, constant(x), constant(Tensor<double>({1, 2, 1, 1}, 1.0)), constant(Tensor<double>({1, 2, 1, 1})), rm, rv,
      Mode::train);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(y->value.data[i] - x.data[i] / std::sqrt(1.0 + 1e-5)) < 1e-12);
    }
  }
  SUBCASE("constant channel maps to the shift")
  {
    Tensor<double> rm({1, 1, 1, 1}), rv({1, 1, 1, 1}, 1.0);
    Tape<double> t(false);
    auto const y = batchnorm<double>(
      t, constant(Tensor<double>({2, 1, 3, 3}, 4.0)), constant(Tensor<double>({1, 1, 1, 1}, 2.0)),
      constant(Tensor<double>({1, 1, 1, 1}, 0.25)), rm, rv, Mode::train);
    for (auto v : y->value.data) {
      CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    }
    // running mean moved a tenth of the way to the batch mean
    CHECK(rm.data[0] == doctest::Approx(0.4).epsilon(1e-12));
  }
  SUBCASE("eval mode uses the running statistics")
  {
    Tensor<double> rm({1, 1, 1, 1}, 1.0), rv({1, 1, 1, 1}, 4.0);
    Tape<double> t(false);
    auto const y = batchnorm<double>(
      t, constant(Tensor<double>({1, 1, 1, 2}, std::vector<double>{3.0, -1.0})),
      constant(Tensor<double>({1, 1, 1, 1}, 1.0)), constant(Tensor<double>({1, 1, 1, 1})), rm, rv, Mode::eval);
    CHECK(y->value.data[0] == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
    CHECK(rm.data[0] == 1.0);
  }
  SUBCASE("a single value per channel cannot be normalized in training")
  {
    Tensor<double> rm({1, 1, 1, 1}), rv({1, 1, 1, 1}, 1.0);
    Tape<double> t(false);
    CHECK_THROWS_AS(
      batchnorm<double>(
        t, constant(Tensor<double>({1, 1, 1, 1}, 1.0)), constant(Tensor<double>({1, 1, 1, 1}, 1.0)),
        constant(Tensor<double>({1, 1, 1, 1})), rm, rv, Mode::train),
      ParameterError);
  }
}

TEST_CASE("pointwise values")
{
  Tape<double> t(false);
  auto const x = constant(Tensor<double>({1, 2, 1, 2}, std::vector<double>{-1.0, 2.0, 3.0, 0.5}));
  auto const r = relu<double>(t, x);
  CHECK(r->value.data == std::vector<double>{0.0, 2.0, 3.0, 0.5});
  auto const zero = constant(Tensor<double>({1, 1, 1, 1}, 0.0));
  CHECK(softthresh<double>(t, x, zero)->value.data == x->value.data);
  CHECK(softthresh_complex<double>(t, x, zero)->value.data == x->value.data);
  auto const one = constant(Tensor<double>({1, 1, 1, 1}, 1.0));
  CHECK(softthresh<double>(t, x, one)->value.data == std::vector<double>{0.0, 1.0, 2.0, 0.0});
  // 3 + 4i
  auto const z = constant(Tensor<double>({1, 2, 1, 1}, std::vector<double>{3.0, 4.0}));
  auto const s = softthresh_complex<double>(t, z, one);
  CHECK(s->value.data[0] == doctest::Approx(2.4).epsilon(1e-15));
  CHECK(s->value.data[1] == doctest::Approx(3.2).epsilon(1e-15));
  // negative threshold is clamped
  auto const neg = constant(Tensor<double>({1, 1, 1, 1}, -0.5));
  CHECK(softthresh<double>(t, x, neg)->value.data == x->value.data);
}

TEST_CASE("pooling, upsampling, concatenation")
{
  Tape<double> t(false);
  auto const c = constant(Tensor<double>({1, 2, 4, 6}, 1.5));
  auto const p = maxpool2<double>(t, c);
  CHECK(p->shape() == Shape{1, 2, 2, 3});
  for (auto v : p->value.data) {
    CHECK(v == 1.5);
  }
  auto const u = upsample2<double>(t, p);
  CHECK(u->value.data == c->value.data);
  auto const a = constant(Tensor<double>({2, 3, 4, 4}));
  auto const b = constant(Tensor<double>({2, 5, 4, 4}));
  CHECK(concat_channels<double>(t, a, b)->shape() == Shape{2, 8, 4, 4});
  CHECK_THROWS_AS(maxpool2<double>(t, constant(Tensor<double>({1, 1, 3, 4}))), ShapeError);
}

TEST_CASE("gradients of real-valued ops")
{
  std::mt19937_64 g(55);
  auto const x = leaf(rand_tensor({2, 3, 6, 4}, g), true);
  auto const x2 = leaf(rand_tensor({2, 3, 6, 4}, g), true);
  auto const w = leaf(rand_tensor({2, 3, 3, 3}, g, 0.3), true);
  auto const b = leaf(rand_tensor({1, 2, 1, 1}, g), true);
  auto const sc = leaf(rand_tensor({1, 3, 1, 1}, g), true);
  auto const sh = leaf(rand_tensor({1, 3, 1, 1}, g), true);
  auto const s1 = leaf(Tensor<double>({1, 1, 1, 1}, 0.7), true);
  auto const rho = leaf(Tensor<double>({1, 1, 1, 1}, 0.3), true);
  Tensor<double> rm({1, 3, 1, 1}), rv({1, 3, 1, 1}, 1.0);
  double const tol = 1e-5;

  CHECK(grad_check({x, w, b}, [&](Tape<double> &t) { return probe(t, conv3x3<double>(t, x, w, b)); }) < tol);
  CHECK(
    grad_check({x, sc, sh}, [&](Tape<double> &t) { return probe(t, batchnorm<double>(t, x, sc, sh, rm, rv, Mode::train)); }) <
    tol);
  CHECK(
    grad_check({x, sc, sh}, [&](Tape<double> &t) { return probe(t, batchnorm<double>(t, x, sc, sh, rm, rv, Mode::eval)); }) <
    tol);
  CHECK(grad_check({x}, [&](Tape<double> &t) { return probe(t, relu<double>(t, x)); }) < tol);
  CHECK(grad_check({x, rho}, [&](Tape<double> &t) { return probe(t, softthresh<double>(t, x, rho)); }) < tol);
  CHECK(grad_check({x}, [&](Tape<double> &t) { return probe(t, maxpool2<double>(t, x)); }) < tol);
  CHECK(grad_check({x}, [&](Tape<double> &t) { return probe(t, upsample2<double>(t, x)); }) < tol);
  CHECK(grad_check({x, x2}, [&](Tape<double> &t) { return probe(t, concat_channels<double>(t, x, x2)); }) < tol);
  CHECK(grad_check({x, x2}, [&](Tape<double> &t) { return probe(t, add<double>(t, x, x2)); }) < tol);
  CHECK(grad_check({x, x2}, [&](Tape<double> &t) { return probe(t, sub<double>(t, x, x2)); }) < tol);
  CHECK(grad_check({x, s1}, [&](Tape<double> &t) { return probe(t, scale<double>(t, x, s1)); }) < tol);
  CHECK(grad_check({x}, [&](Tape<double> &t) { return probe(t, mul_const<double>(t, x, -1.7)); }) < tol);
  CHECK(grad_check({x}, [&](Tape<double> &t) { return sum<double>(t, relu<double>(t, x)); }) < tol);
  Tensor<double> m({2, 1, 6, 4});
  for (std::size_t i = 0; i < m.size(); i += 3) {
    m.data[i] = 1.0;
  }
  CHECK(grad_check({x}, [&](Tape<double> &t) { return sum_sq<double>(t, x, &m); }) < tol);
}

TEST_CASE("gradients of complex-valued ops")
{
  std::mt19937_64 g(57);
  int const J = 3;
  auto const img = leaf(rand_tensor({2, 2, 8, 6}, g), true);
  auto const coils = leaf(rand_tensor({2, 2 * J, 8, 6}, g), true);
  auto const maps = leaf(rand_tensor({2, 2 * J, 8, 6}, g), true);
  auto const rho = leaf(Tensor<double>({1, 1, 1, 1}, 0.4), true);
  auto const lam = leaf(Tensor<double>({1, 1, 1, 1}, 0.8), true);
  Tensor<double> mask({2, 1, 8, 6});
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask.data[i] = (i * 7 % 3 == 0) ? 1.0 : 0.0;
  }
  auto const y = rand_tensor({2, 2 * J, 8, 6}, g);
  double const tol = 1e-5;

  CHECK(grad_check({coils}, [&](Tape<double> &t) { return probe(t, fft2c<double>(t, coils)); }) < tol);
  CHECK(grad_check({coils}, [&](Tape<double> &t) { return probe(t, ifft2c<double>(t, coils)); }) < tol);
  CHECK(grad_check({maps, img}, [&](Tape<double> &t) { return probe(t, cmul_coils<double>(t, maps, img)); }) < tol);
  CHECK(grad_check({maps, coils}, [&](Tape<double> &t) { return probe(t, cmul<double>(t, maps, coils)); }) < tol);
  CHECK(grad_check({maps, coils}, [&](Tape<double> &t) { return probe(t, combine<double>(t, maps, coils)); }) < tol);
  CHECK(grad_check({coils}, [&](Tape<double> &t) { return probe(t, mask_mul<double>(t, coils, mask)); }) < tol);
  CHECK(grad_check({coils, lam}, [&](Tape<double> &t) { return probe(t, dc_blend<double>(t, coils, y, mask, lam)); }) < tol);
  // keep the SoS away from zero so central differences stay accurate
  auto const far = leaf(rand_tensor({2, 2 * J, 8, 6}, g, 0.3), true);
  for (auto &v : far->value.data) {
    v += 1.0;
  }
  CHECK(grad_check({far}, [&](Tape<double> &t) { return probe(t, sos_normalize<double>(t, far)); }) < tol);
  CHECK(grad_check({coils, rho}, [&](Tape<double> &t) { return probe(t, softthresh_complex<double>(t, coils, rho)); }) < tol);
}

TEST_CASE("complex ops agree with the classical operators")
{
  std::mt19937_64 g(59);
  auto const x = testing::rand_image(8, 8, g);
  auto const maps = testing::rand_maps(2, 8, 8, g);
  Tape<double> t(false);
  auto const xs = constant(pack<double>(x));
  auto const ms = constant(pack<double>(maps));
  auto const k = fft2c<double>(t, cmul_coils<double>(t, ms, xs));
  auto const want = sense_forward(maps, x, full_mask(8, 8));
  CHECK(testing::rel_diff(unpack_stack(k->value).data, want.data) < 1e-13);
  auto const back = combine<double>(t, ms, ifft2c<double>(t, k));
  CHECK(testing::rel_diff(unpack_image(back->value).data, x.data) < 1e-12);
  auto const n = sos_normalize<double>(t, ms);
  CHECK(unpack_maps(n->value).max_sos_deviation() < 1e-12);
}

TEST_CASE("packing round trip")
{
  std::mt19937_64 g(61);
  auto const x = testing::rand_image(4, 6, g);
  CHECK(unpack_image(pack<double>(x)).data == x.data);
  auto const s = testing::rand_stack(3, 4, 6, g);
  CHECK(unpack_stack(pack<double>(s)).data == s.data);
  auto const b = batch<double>({pack<double>(x), pack<double>(x)});
  CHECK(b.shape == Shape{2, 2, 4, 6});
  CHECK(unpack_image(b, 1).data == x.data);
}

TEST_CASE("Adam")
{
  SUBCASE("first step")
  {
    ParamStore<double> st;
    auto const p = st.add("p", Tensor<double>({1, 1, 1, 1}, 1.0));
    p->grad = {0.5};
    adam_step(st, 0.001);
    CHECK(p->value.data[0] == doctest::Approx(1.0 - 0.001 * 0.5 / (std::sqrt(0.25) + 1e-8)).epsilon(1e-15));
  }
  SUBCASE("zero gradient leaves parameters alone")
  {
    ParamStore<double> st;
    auto const p = st.add("p", Tensor<double>({1, 1, 1, 3}, 0.25));
    adam_step(st, 0.1);
    for (auto v : p->value.data) {
      CHECK(v == 0.25);
    }
  }
  SUBCASE("minimizes p^2")
  {
    ParamStore<double> st;
    auto const p = st.add("p", Tensor<double>({1, 1, 1, 1}, 1.0));
    for (int i = 0; i < 200; ++i) {
      st.zero_grad();
      Tape<double> t;
      t.backward(sum_sq<double>(t, p));
      adam_step(st, 0.01);
    }
    CHECK(std::abs(p->value.data[0]) < 0.1);
  }
  SUBCASE("lower bounds are enforced")
  {
    ParamStore<double> st;
    auto const r = st.add("rho", Tensor<double>({1, 1, 1, 1}, 1e-4), true, 0.0);
    r->grad = {10.0};
    adam_step(st, 0.01);
    CHECK(r->value.data[0] == 0.0);
  }
}

TEST_CASE("Xavier initialization")
{
  Shape const s{64, 32, 3, 3};
  double const bound = std::sqrt(6.0 / (32 * 9 + 64 * 9));
  auto const a = xavier_init<double>(s, 7);
  auto const b = xavier_init<double>(s, 7);
  CHECK(a.data == b.data);
  CHECK(a.data != xavier_init<double>(s, 8).data);
  for (auto v : a.data) {
    CHECK(std::abs(v) <= bound);
  }
  Shape const big{1000, 100, 1, 1};
  auto const c = xavier_init<double>(big, 9);
  double m = 0, v = 0;
  for (auto x : c.data) {
    m += x;
  }
  m /= c.size();
  for (auto x : c.data) {
    v += (x - m) * (x - m);
  }
  v /= c.size();
  double const want = 2.0 / (100 + 1000);
  CHECK(std::abs(v - want) / want < 0.2);
}

TEST_CASE("parallel and sequential passes agree")
{
  std::mt19937_64 g(63);
  auto const xv = rand_tensor({4, 3, 8, 8}, g);
  auto const wv = rand_tensor({3, 3, 3, 3}, g, 0.3);
  auto run = [&](int threads) {
    set_num_threads(threads);
    auto const x = leaf(xv, true);
    auto const w = leaf(wv, true);
    Tape<double> t;
    t.backward(probe(t, conv3x3<double>(t, x, w, nullptr)));
    auto out = w->grad;
    out.insert(out.end(), x->grad.begin(), x->grad.end());
    return out;
  };
  auto const seq = run(1);
  auto const seq2 = run(1);
  auto const par = run(4);
  set_num_threads(1);
  CHECK(seq == seq2);
  double worst = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    worst = std::max(worst, std::abs(seq[i] - par[i]));
  }
  CHECK(worst < 1e-6);
}
