#pragma once

#include "jdsi/numerics.hpp"

#include <string>

namespace jdsi::harness {

enum class PgmScale
{
  linear,   // own maximum maps to 255
  fixed_max // caller supplies the maximum, shared across compared images
};

/// 8-bit binary PGM of |img|. Writes `path + ".txt"` recording the scale
/// mode and the value mapped to 255. Returns that value.
double export_pgm(ComplexImage const &img, std::string const &path, PgmScale scale, double max_value = 0.0);

/// |a - b|, the error map rendered next to reconstructions.
ComplexImage error_map(ComplexImage const &a, ComplexImage const &b);

} // namespace jdsi::harness
