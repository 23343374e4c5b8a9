#pragma once

#include "jdsi/harness/phantom.hpp"
#include "jdsi/mri_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace jdsi::harness {

struct CohortConfig
{
  int height = 64;
  int width = 64;
  int coils = 4;
  int train = 200;
  int val = 10;
  int test = 20;
  int train_lesions = 0; // lesions per training phantom
  int test_lesions = 0;  // lesions per validation/test phantom
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
};

enum class Split
{
  train,
  val,
  test
};

char const *split_name(Split s);

/// Sample IDs: train [0, train), val [train, train + val), test after that.
std::vector<int> split_ids(CohortConfig const &cfg, Split split);
Split split_of(CohortConfig const &cfg, int id);

PhantomSpec cohort_spec(CohortConfig const &cfg, int id);
Sample cohort_sample(CohortConfig const &cfg, int id);

/// Undersampling request. acs is the nominal ACS count for a 320-column
/// acquisition; 1D counts are scaled to the grid width (minimum 1), 2D
/// block sides are used as given. acs = 0 means calibrationless.
struct MaskSpec
{
  bool two_d = false;
  double af = 4.0;
  int acs = 24;
};

int effective_acs(MaskSpec const &m, int width);

/// Per-sample mask, seeded from (cohort seed, sample id, pattern).
SamplingMask sample_mask(MaskSpec const &m, int height, int width, std::uint64_t seed, int sample_id);

/// Text manifest listing the cohort parameters and split sample IDs.
void write_manifest(std::string const &path, CohortConfig const &cfg);

} // namespace jdsi::harness
