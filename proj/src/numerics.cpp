#include "jdsi/numerics.hpp"

#include "jdsi/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>

namespace jdsi {

ComplexImage::ComplexImage(int h, int w)
  : height(h)
  , width(w)
  , data(static_cast<std::size_t>(h) * w)
{
}

ComplexImage::ComplexImage(int h, int w, std::vector<cx> values)
  : height(h)
  , width(w)
  , data(std::move(values))
{
  if (data.size() != static_cast<std::size_t>(h) * w) {
    throw ShapeError("ComplexImage data length does not match dimensions");
  }
}

CoilStack::CoilStack(int j, int h, int w)
  : coils(j)
  , height(h)
  , width(w)
  , data(static_cast<std::size_t>(j) * h * w)
{
}

ComplexImage CoilStack::coil_image(int j) const
{
  auto const c = coil(j);
  return ComplexImage(height, width, std::vector<cx>(c.begin(), c.end()));
}

void CoilStack::set_coil(int j, ComplexImage const &img)
{
  if (img.height != height || img.width != width) {
    throw ShapeError("coil image does not match stack dimensions");
  }
  std::copy(img.data.begin(), img.data.end(), coil(j).begin());
}

namespace {

// FFTW planning is not thread-safe; execution of an existing plan on other
// arrays with the same alignment is.
class PlanCache
{
public:
  static PlanCache &instance()
  {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int h, int w, int sign, fftw_complex *buf)
  {
    std::lock_guard lock(mutex_);
    auto const key = std::tuple{h, w, sign};
    if (auto it = plans_.find(key); it != plans_.end()) {
      return it->second;
    }
    // FFTW_ESTIMATE keeps the chosen algorithm, and so the rounding, fixed
    // from run to run.
    fftw_plan plan = fftw_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE);
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache()
  {
    for (auto &[k, p] : plans_) {
      fftw_destroy_plan(p);
    }
  }

private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

// Per-thread SIMD-aligned work buffer.
class Scratch
{
public:
  fftw_complex *get(std::size_t n)
  {
    if (n > size_) {
      fftw_free(buf_);
      buf_ = fftw_alloc_complex(n);
      size_ = n;
    }
    return buf_;
  }
  ~Scratch() { fftw_free(buf_); }

private:
  fftw_complex *buf_ = nullptr;
  std::size_t size_ = 0;
};

void centered_transform(std::span<cx> plane, int h, int w, int sign)
{
  if (h <= 0 || w <= 0 || plane.size() != static_cast<std::size_t>(h) * w) {
    throw ShapeError("transform plane does not match dimensions");
  }
  require_finite(plane, sign == FFTW_FORWARD ? "fft2c input" : "ifft2c input");
  thread_local Scratch scratch;
  std::size_t const n = plane.size();
  auto *buf = scratch.get(n);
  auto *work = reinterpret_cast<cx *>(buf);
  // ifftshift into the aligned buffer: index i moves to (i + ceil(n/2)) mod n
  int const ay = h / 2;
  int const ax = w / 2;
  int const bx = w - ax; // ceil(w / 2)
  for (int y = 0; y < h; ++y) {
    cx *dst = work + static_cast<std::size_t>((y + h - ay) % h) * w;
    cx const *src = plane.data() + static_cast<std::size_t>(y) * w;
    std::copy(src, src + ax, dst + bx);
    std::copy(src + ax, src + w, dst);
  }
  fftw_execute_dft(PlanCache::instance().get(h, w, sign, buf), buf, buf);
  // fftshift back: index i moves to (i + floor(n/2)) mod n
  double const scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (int y = 0; y < h; ++y) {
    cx *dst = plane.data() + static_cast<std::size_t>((y + ay) % h) * w;
    cx const *src = work + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < bx; ++x) {
      dst[x + ax] = src[x] * scale;
    }
    for (int x = bx; x < w; ++x) {
      dst[x - bx] = src[x] * scale;
    }
  }
}

} // namespace

void fft2c_inplace(std::span<cx> plane, int height, int width)
{
  centered_transform(plane, height, width, FFTW_FORWARD);
}

void ifft2c_inplace(std::span<cx> plane, int height, int width)
{
  centered_transform(plane, height, width, FFTW_BACKWARD);
}

ComplexImage fft2c(ComplexImage const &img)
{
  ComplexImage out = img;
  fft2c_inplace(out.data, out.height, out.width);
  return out;
}

ComplexImage ifft2c(ComplexImage const &ksp)
{
  ComplexImage out = ksp;
  ifft2c_inplace(out.data, out.height, out.width);
  return out;
}

CoilStack fft2c(CoilStack const &stack)
{
  CoilStack out = stack;
  for (int j = 0; j < out.coils; ++j) {
    fft2c_inplace(out.coil(j), out.height, out.width);
  }
  return out;
}

CoilStack ifft2c(CoilStack const &stack)
{
  CoilStack out = stack;
  for (int j = 0; j < out.coils; ++j) {
    ifft2c_inplace(out.coil(j), out.height, out.width);
  }
  return out;
}

ComplexImage sos(CoilStack const &stack)
{
  if (stack.coils < 1) {
    throw InvalidInput("sos needs at least one coil");
  }
  require_finite(stack.data, "sos input");
  ComplexImage out(stack.height, stack.width);
  std::size_t const n = stack.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < stack.coils; ++j) {
      acc += std::norm(stack.data[j * n + i]);
    }
    out.data[i] = std::sqrt(acc);
  }
  return out;
}

cx dot(std::span<cx const> a, std::span<cx const> b)
{
  if (a.size() != b.size()) {
    throw ShapeError("dot operands differ in length");
  }
  cx acc{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += std::conj(a[i]) * b[i];
  }
  return acc;
}

double norm2_squared(std::span<cx const> a)
{
  double acc = 0.0;
  for (auto const &v : a) {
    acc += std::norm(v);
  }
  return acc;
}

double norm2(std::span<cx const> a) { return std::sqrt(norm2_squared(a)); }

void require_finite(std::span<cx const> a, char const *what)
{
  for (auto const &v : a) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw InvalidInput(std::string(what) + " contains non-finite values");
    }
  }
}

} // namespace jdsi
