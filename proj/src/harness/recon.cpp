#include "jdsi/harness/recon.hpp"

#include "jdsi/calibration.hpp"
#include "jdsi/container.hpp"
#include "jdsi/error.hpp"

#include <filesystem>

namespace jdsi::harness {

Method parse_method(std::string const &s)
{
  if (s == "zf") {
    return Method::zf;
  }
  if (s == "cg-sense") {
    return Method::cg_sense;
  }
  if (s == "pfista") {
    return Method::pfista;
  }
  if (s == "jsense") {
    return Method::jsense;
  }
  if (s == "jdsi") {
    return Method::jdsi;
  }
  throw UsageError("unknown method '" + s + "' (zf|cg-sense|pfista|jsense|jdsi)");
}

MapSource parse_maps(std::string const &s)
{
  if (s == "gt") {
    return MapSource::gt;
  }
  if (s == "acs") {
    return MapSource::acs;
  }
  if (s == "jsense") {
    return MapSource::jsense;
  }
  if (s == "learned") {
    return MapSource::learned;
  }
  throw UsageError("unknown map source '" + s + "' (gt|acs|jsense|learned)");
}

char const *method_name(Method m)
{
  switch (m) {
  case Method::zf:
    return "zf";
  case Method::cg_sense:
    return "cg-sense";
  case Method::pfista:
    return "pfista";
  case Method::jsense:
    return "jsense";
  case Method::jdsi:
    return "jdsi";
  }
  return "?";
}

char const *maps_name(MapSource m)
{
  switch (m) {
  case MapSource::gt:
    return "gt";
  case MapSource::acs:
    return "acs";
  case MapSource::jsense:
    return "jsense";
  case MapSource::learned:
    return "learned";
  }
  return "?";
}

SenseMaps estimate_maps(
  MapSource src, CoilStack const &y, SamplingMask const &mask, CoilStack const *full_coils, ReconSettings const &s)
{
  switch (src) {
  case MapSource::gt:
    if (!full_coils) {
      throw UsageError("gt maps need fully sampled reference data");
    }
    return calib::gt_maps(*full_coils);
  case MapSource::acs:
    return calib::acs_lowres_maps(y, mask);
  case MapSource::jsense:
    return recon::jsense(y, mask, s.jsense).maps;
  case MapSource::learned:
    break;
  }
  throw UsageError("learned maps are produced only by the jdsi method");
}

std::unique_ptr<net::JdsiNet<float>> load_network(std::string const &checkpoint)
{
  if (checkpoint.empty() || !std::filesystem::exists(checkpoint)) {
    throw ScenarioError("missing checkpoint '" + checkpoint + "'");
  }
  auto const records = io::read(checkpoint);
  auto n = std::make_unique<net::JdsiNet<float>>(net::checkpoint_config(records));
  net::load_checkpoint(*n, records);
  return n;
}

net::Example<float> inference_example(CoilStack const &y, SamplingMask const &mask, SenseMaps const *ext_maps)
{
  CoilStack const zeros(y.coils, y.height, y.width);
  SenseMaps const none(y.coils, y.height, y.width);
  return net::make_example<float>(y, mask, zeros, none, ext_maps);
}

ReconResult run_recon(
  Method method,
  MapSource maps,
  CoilStack const &y,
  SamplingMask const &mask,
  CoilStack const *full_coils,
  net::JdsiNet<float> *net,
  ReconSettings const &s,
  bool keep_phases)
{
  ReconResult r;
  switch (method) {
  case Method::zf:
    r.x = sos(zero_filled(y, mask));
    return r;
  case Method::cg_sense: {
    auto m = estimate_maps(maps, y, mask, full_coils, s);
    r.x = recon::cg_sense(y, m, mask, s.cg_iters, s.cg_tol).x;
    r.maps = std::move(m);
    return r;
  }
  case Method::pfista: {
    auto m = estimate_maps(maps, y, mask, full_coils, s);
    r.x = recon::pfista_sense(y, m, mask, s.pfista_lambda, s.pfista_iters).x;
    r.maps = std::move(m);
    return r;
  }
  case Method::jsense: {
    std::optional<SenseMaps> init;
    if (maps == MapSource::gt) {
      init = estimate_maps(maps, y, mask, full_coils, s);
    }
    auto js = recon::jsense(y, mask, s.jsense, init);
    r.x = std::move(js.x);
    r.maps = std::move(js.maps);
    return r;
  }
  case Method::jdsi: {
    if (!net) {
      throw ScenarioError("jdsi reconstruction needs a trained checkpoint");
    }
    std::optional<SenseMaps> ext;
    if (net->config().frozen_maps) {
      ext = estimate_maps(maps == MapSource::learned ? MapSource::acs : maps, y, mask, full_coils, s);
    }
    auto const e = inference_example(y, mask, ext ? &*ext : nullptr);
    auto [x, m] = net->reconstruct(e, keep_phases ? &r.phases : nullptr);
    r.x = std::move(x);
    r.maps = std::move(m);
    return r;
  }
  }
  throw UsageError("unknown method");
}

} // namespace jdsi::harness
