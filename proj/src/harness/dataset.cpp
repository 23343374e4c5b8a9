#include "jdsi/harness/dataset.hpp"

#include "jdsi/error.hpp"
#include "jdsi/rng.hpp"

#include <cmath>
#include <fstream>

namespace jdsi::harness {

char const *split_name(Split s)
{
  switch (s) {
  case Split::train:
    return "train";
  case Split::val:
    return "val";
  case Split::test:
    return "test";
  }
  return "?";
}

std::vector<int> split_ids(CohortConfig const &cfg, Split split)
{
  if (cfg.train < 0 || cfg.val < 0 || cfg.test < 0) {
    throw InvalidInput("split sizes must be >= 0");
  }
  int begin = 0;
  int count = cfg.train;
  if (split == Split::val) {
    begin = cfg.train;
    count = cfg.val;
  } else if (split == Split::test) {
    begin = cfg.train + cfg.val;
    count = cfg.test;
  }
  std::vector<int> ids(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    ids[i] = begin + i;
  }
  return ids;
}

Split split_of(CohortConfig const &cfg, int id)
{
  if (id < 0 || id >= cfg.train + cfg.val + cfg.test) {
    throw InvalidInput("sample id " + std::to_string(id) + " is outside the cohort");
  }
  if (id < cfg.train) {
    return Split::train;
  }
  return id < cfg.train + cfg.val ? Split::val : Split::test;
}

PhantomSpec cohort_spec(CohortConfig const &cfg, int id)
{
  int const lesions = split_of(cfg, id) == Split::train ? cfg.train_lesions : cfg.test_lesions;
  std::uint64_t const seed = Rng(cfg.seed, "cohort").split(static_cast<std::uint64_t>(id)).key();
  return random_phantom(cfg.height, cfg.width, seed, lesions, cfg.noise_sigma);
}

Sample cohort_sample(CohortConfig const &cfg, int id) { return synth_sample(cohort_spec(cfg, id), cfg.coils); }

int effective_acs(MaskSpec const &m, int width)
{
  if (m.acs <= 0 || m.two_d) {
    return std::max(0, m.acs);
  }
  return std::max(1, static_cast<int>(std::lround(m.acs * width / 320.0)));
}

SamplingMask sample_mask(MaskSpec const &m, int height, int width, std::uint64_t seed, int sample_id)
{
  std::uint64_t const s = Rng(seed, m.two_d ? "mask-2d" : "mask-1d")
                            .split(static_cast<std::uint64_t>(sample_id))
                            .split(static_cast<std::uint64_t>(std::llround(m.af * 1000.0)))
                            .split(static_cast<std::uint64_t>(m.acs))
                            .key();
  int const acs = effective_acs(m, width);
  return m.two_d ? make_mask_2d(width, height, m.af, acs, s) : make_mask_1d(width, height, m.af, acs, s);
}

void write_manifest(std::string const &path, CohortConfig const &cfg)
{
  std::ofstream f(path);
  if (!f) {
    throw InvalidInput("cannot write manifest " + path);
  }
  f << "height=" << cfg.height << "\nwidth=" << cfg.width << "\ncoils=" << cfg.coils << "\nseed=" << cfg.seed
    << "\nnoise_sigma=" << cfg.noise_sigma << "\ntrain_lesions=" << cfg.train_lesions
    << "\ntest_lesions=" << cfg.test_lesions << '\n';
  for (Split s : {Split::train, Split::val, Split::test}) {
    f << split_name(s) << "_ids=";
    auto const ids = split_ids(cfg, s);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      f << (i ? "," : "") << ids[i];
    }
    f << '\n';
  }
}

} // namespace jdsi::harness
