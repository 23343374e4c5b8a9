#include "jdsi/harness/pgm.hpp"

#include "jdsi/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

namespace jdsi::harness {

double export_pgm(ComplexImage const &img, std::string const &path, PgmScale scale, double max_value)
{
  int const h = img.height;
  int const w = img.width;
  std::vector<double> mag(static_cast<std::size_t>(h) * w);
  double peak = 0.0;
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      double const m = std::abs(img(u, v));
      mag[static_cast<std::size_t>(u) * w + v] = m;
      peak = std::max(peak, m);
    }
  }
  double const top = scale == PgmScale::linear ? peak : max_value;
  if (scale == PgmScale::fixed_max && !(max_value > 0.0)) {
    throw InvalidInput("fixed-max PGM scale needs a positive maximum");
  }
  std::vector<std::uint8_t> px(mag.size(), 0);
  if (top > 0.0) {
    for (std::size_t i = 0; i < mag.size(); ++i) {
      double const g = std::round(255.0 * std::min(mag[i], top) / top);
      px[i] = static_cast<std::uint8_t>(g);
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw InvalidInput("cannot write " + path);
  }
  os << "P5\n" << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<char const *>(px.data()), static_cast<std::streamsize>(px.size()));
  std::ofstream side(path + ".txt");
  side.precision(17);
  side << "scale " << (scale == PgmScale::linear ? "linear" : "fixed-max") << "\nmax " << top << '\n';
  if (!os || !side) {
    throw InvalidInput("failed writing " + path);
  }
  return top;
}

ComplexImage error_map(ComplexImage const &a, ComplexImage const &b)
{
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("error map of differently sized images");
  }
  ComplexImage e(a.height, a.width);
  for (int u = 0; u < a.height; ++u) {
    for (int v = 0; v < a.width; ++v) {
      e(u, v) = std::abs(std::abs(a(u, v)) - std::abs(b(u, v)));
    }
  }
  return e;
}

} // namespace jdsi::harness
