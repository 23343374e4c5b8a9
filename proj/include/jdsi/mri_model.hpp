#pragma once

#include "jdsi/numerics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace jdsi {

enum class AcsKind : std::uint8_t
{
  none,
  lines,
  block
};

struct AcsRegion
{
  AcsKind kind = AcsKind::none;
  int count = 0; // central columns for lines, side length for block
};

/// Acquired k-space positions. 1D masks sample whole columns (phase-encode
/// direction runs along the width).
struct SamplingMask
{
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> omega; // 1 = acquired
  AcsRegion acs;
  double af_nominal = 1.0;
  std::uint64_t seed = 0;

  bool at(int y, int x) const { return omega[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t sampled() const;
  double af_actual() const;
  /// True for positions inside the ACS descriptor's region.
  bool in_acs(int y, int x) const;
};

SamplingMask make_mask_1d(int width, int height, double af, int acs_lines, std::uint64_t seed);
SamplingMask make_mask_2d(int width, int height, double af, int acs_block, std::uint64_t seed);
SamplingMask full_mask(int height, int width);

/// Unit sum-of-squares on the foreground, exactly zero elsewhere.
struct SenseMaps
{
  int coils = 0;
  int height = 0;
  int width = 0;
  std::vector<cx> data; // J x H x W
  std::vector<std::uint8_t> foreground;

  SenseMaps() = default;
  SenseMaps(int j, int h, int w);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  cx &at(int j, std::size_t i) { return data[j * plane_size() + i]; }
  cx const &at(int j, std::size_t i) const { return data[j * plane_size() + i]; }
  CoilStack as_stack() const;

  /// Largest |sum_j |S_j|^2 - 1| on the foreground.
  double max_sos_deviation() const;
  /// Largest magnitude off the foreground.
  double max_background() const;
};

/// Divide-by-SoS normalization shared by every map producer. Pixels with SoS
/// below eps_rel * max(SoS) leave the foreground and are zeroed.
SenseMaps normalize_maps(CoilStack const &raw, double eps_rel);

CoilStack sense_forward(SenseMaps const &maps, ComplexImage const &x, SamplingMask const &mask);
ComplexImage sense_adjoint(SenseMaps const &maps, CoilStack const &y, SamplingMask const &mask);

/// Normal operator E^H E.
ComplexImage sense_normal(SenseMaps const &maps, ComplexImage const &x, SamplingMask const &mask);

/// Multi-coil images of zero-filled k-space.
CoilStack zero_filled(CoilStack const &y, SamplingMask const &mask);

/// Blend the coil k-space of x_tilde toward y on the acquired set and map back
/// with a conj(S)-weighted coil combination.
ComplexImage data_consistency(
  ComplexImage const &x_tilde, SenseMaps const &maps, CoilStack const &y, SamplingMask const &mask, double lambda);

/// Coil k-space after the blend, before the coil combination.
CoilStack data_consistency_kspace(
  ComplexImage const &x_tilde, SenseMaps const &maps, CoilStack const &y, SamplingMask const &mask, double lambda);

/// 0.5-free data fidelity ||y - U F S x||^2.
double data_fidelity(SenseMaps const &maps, ComplexImage const &x, CoilStack const &y, SamplingMask const &mask);

/// Apply the mask to a k-space stack in place.
void apply_mask(CoilStack &ksp, SamplingMask const &mask);

std::string describe(SamplingMask const &mask);

} // namespace jdsi
