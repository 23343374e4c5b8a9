#pragma once

#include "jdsi/error.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace jdsi::nn {

struct Shape
{
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(Shape const &) const = default;
  std::string str() const
  {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Dense N x C x H x W real array.
template <typename T>
struct Tensor
{
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0))
    : shape(s)
    , data(s.size(), fill)
  {
  }
  Tensor(Shape s, std::vector<T> values)
    : shape(s)
    , data(std::move(values))
  {
    if (data.size() != shape.size()) {
      throw ShapeError("tensor data does not match shape " + shape.str());
    }
  }

  std::size_t size() const { return data.size(); }
  T *plane(int n, int c) { return data.data() + (static_cast<std::size_t>(n) * shape.c + c) * shape.plane(); }
  T const *plane(int n, int c) const
  {
    return data.data() + (static_cast<std::size_t>(n) * shape.c + c) * shape.plane();
  }
  T &at(int n, int c, int y, int x) { return plane(n, c)[static_cast<std::size_t>(y) * shape.w + x]; }
  T const &at(int n, int c, int y, int x) const { return plane(n, c)[static_cast<std::size_t>(y) * shape.w + x]; }

  template <typename U>
  Tensor<U> cast() const
  {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }
};

} // namespace jdsi::nn
