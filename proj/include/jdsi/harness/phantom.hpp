#pragma once

#include "jdsi/mri_model.hpp"

#include <cstdint>
#include <vector>

namespace jdsi::harness {

/// Ellipse in normalized coordinates: the field of view spans [-1, 1] on
/// both axes; u runs along the width, v along the height.
struct Ellipse
{
  double cu = 0.0;
  double cv = 0.0;
  double au = 0.1;
  double av = 0.1;
  double angle_deg = 0.0;
  double intensity = 1.0;

  bool contains(double u, double v) const;
};

/// Ellipses are painted in order; a later ellipse overwrites earlier ones.
/// Lesions are painted last.
struct PhantomSpec
{
  int height = 64;
  int width = 64;
  std::vector<Ellipse> ellipses;
  std::vector<Ellipse> lesions;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Randomized Shepp-Logan-style head with optional lesions.
PhantomSpec random_phantom(int height, int width, std::uint64_t seed, int lesions = 0, double noise_sigma = 0.0);

ComplexImage render(PhantomSpec const &spec);

/// J complex Gaussian-lobe coil profiles centred at equal angles around the
/// field of view, normalized pixelwise to unit SoS everywhere.
SenseMaps coil_profiles(int coils, int height, int width, std::uint64_t seed);

struct Sample
{
  ComplexImage truth;
  SenseMaps true_maps;
  CoilStack full_kspace;
};

/// full_kspace_j = fft2c(maps_j * truth) + complex Gaussian noise whose real
/// and imaginary parts each have standard deviation noise_sigma.
Sample synth_sample(PhantomSpec const &spec, int coils);

/// Fully sampled coil images ifft2c(full_kspace).
CoilStack coil_images(Sample const &s);

} // namespace jdsi::harness
