#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace jdsi {

using cx = std::complex<double>;

/// Single complex plane, row-major H x W.
struct ComplexImage
{
  int height = 0;
  int width = 0;
  std::vector<cx> data;

  ComplexImage() = default;
  ComplexImage(int h, int w);
  ComplexImage(int h, int w, std::vector<cx> values);

  std::size_t size() const { return data.size(); }
  cx &operator()(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  cx const &operator()(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(ComplexImage const &o) const { return height == o.height && width == o.width; }
};

/// J complex planes of identical size, coil-major.
struct CoilStack
{
  int coils = 0;
  int height = 0;
  int width = 0;
  std::vector<cx> data;

  CoilStack() = default;
  CoilStack(int j, int h, int w);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<cx> coil(int j) { return {data.data() + j * plane_size(), plane_size()}; }
  std::span<cx const> coil(int j) const { return {data.data() + j * plane_size(), plane_size()}; }
  ComplexImage coil_image(int j) const;
  void set_coil(int j, ComplexImage const &img);
};

ComplexImage fft2c(ComplexImage const &img);
ComplexImage ifft2c(ComplexImage const &ksp);

/// In-place centered unitary transforms on one plane of an H x W grid.
void fft2c_inplace(std::span<cx> plane, int height, int width);
void ifft2c_inplace(std::span<cx> plane, int height, int width);

/// Per-coil transforms.
CoilStack fft2c(CoilStack const &stack);
CoilStack ifft2c(CoilStack const &stack);

/// Pixelwise root-sum-of-squares; the result is real-valued.
ComplexImage sos(CoilStack const &stack);

cx dot(std::span<cx const> a, std::span<cx const> b); // sum conj(a) * b
double norm2(std::span<cx const> a);
double norm2_squared(std::span<cx const> a);

void require_finite(std::span<cx const> a, char const *what);

} // namespace jdsi
