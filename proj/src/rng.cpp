#include "jdsi/rng.hpp"

#include <cmath>
#include <numbers>

namespace jdsi {

namespace {

std::uint64_t mix(std::uint64_t z)
{
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

} // namespace

std::uint64_t hash_tag(std::string_view tag)
{
  std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed, std::string_view tag)
  : key_(mix(mix(seed + golden) ^ hash_tag(tag)))
{
}

Rng Rng::split(std::string_view tag) const { return Rng(mix(key_ ^ hash_tag(tag))); }

Rng Rng::split(std::uint64_t index) const { return Rng(mix(key_ + mix(index + golden))); }

std::uint64_t Rng::next_u64()
{
  ++counter_;
  return mix(key_ + counter_ * golden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n)
{
  // Rejection sampling keeps the draw exactly uniform.
  std::uint64_t const limit = n == 0 ? 0 : (~std::uint64_t{0} / n) * n;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

double Rng::normal()
{
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double const u2 = uniform();
  double const r = std::sqrt(-2.0 * std::log(u1));
  double const th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

} // namespace jdsi
