#pragma once

#include "jdsi/classical_recon.hpp"
#include "jdsi/jdsi_net.hpp"

#include <memory>
#include <optional>
#include <string>

namespace jdsi::harness {

enum class Method
{
  zf,
  cg_sense,
  pfista,
  jsense,
  jdsi
};

enum class MapSource
{
  gt,
  acs,
  jsense,
  learned
};

Method parse_method(std::string const &s);
MapSource parse_maps(std::string const &s);
char const *method_name(Method m);
char const *maps_name(MapSource m);

struct ReconSettings
{
  int cg_iters = 50;
  double cg_tol = 1e-6;
  double pfista_lambda = 1e-3;
  int pfista_iters = 100;
  recon::JsenseOptions jsense;
};

/// Sensitivity estimate for a map source. gt needs the fully sampled coil
/// images; learned maps come only from the network.
SenseMaps estimate_maps(
  MapSource src, CoilStack const &y, SamplingMask const &mask, CoilStack const *full_coils, ReconSettings const &s);

struct ReconResult
{
  ComplexImage x;
  std::optional<SenseMaps> maps;
  std::vector<net::PhaseState<float>> phases; // JDSI only
};

/// Network restored from a checkpoint file; raises ScenarioError when the
/// file is missing.
std::unique_ptr<net::JdsiNet<float>> load_network(std::string const &checkpoint);

/// Network input without references (inference only).
net::Example<float> inference_example(CoilStack const &y, SamplingMask const &mask, SenseMaps const *ext_maps);

/// zf ignores the map source; jsense produces its own maps; jdsi uses the
/// learned maps, or for a frozen-maps network the requested source.
ReconResult run_recon(
  Method method,
  MapSource maps,
  CoilStack const &y,
  SamplingMask const &mask,
  CoilStack const *full_coils,
  net::JdsiNet<float> *net,
  ReconSettings const &s,
  bool keep_phases = false);

} // namespace jdsi::harness
