#pragma once

#include <cstdint>
#include <string_view>

namespace jdsi {

/// Counter-based generator. A stream is identified by a 64-bit key derived
/// from (seed, purpose tag); draw i of a stream is a pure function of
/// (key, i), so streams split by tag are independent of call order elsewhere.
class Rng
{
public:
  Rng(std::uint64_t seed, std::string_view tag);

  Rng split(std::string_view tag) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; both variates of a pair are used.
  double normal();

  std::uint64_t key() const { return key_; }

private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t hash_tag(std::string_view tag);

} // namespace jdsi
