#pragma once

#include "jdsi/harness/dataset.hpp"
#include "jdsi/harness/recon.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace jdsi::harness {

/// Training/eval pairs for one split. ext selects externally estimated maps
/// for frozen-maps networks.
std::vector<net::Example<float>> make_examples(
  CohortConfig const &cohort,
  Split split,
  MaskSpec const &mask,
  std::optional<MapSource> ext = std::nullopt,
  ReconSettings const &settings = {});

struct MetricRow
{
  std::string scenario;
  std::string method;
  double af = 0.0;
  int acs = 0;
  int sample_id = -1; // -1 is the aggregate row, written as ALL
  double rlne = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  // aggregate rows only
  double rlne_std = 0.0;
  double psnr_std = 0.0;
  double ssim_std = 0.0;

  bool aggregate() const { return sample_id < 0; }
};

struct MetricsReport
{
  std::vector<MetricRow> rows;

  /// Drops old aggregate rows, appends one per (scenario, method, AF, ACS)
  /// group and sorts by scenario, method, AF, ACS, sample_id (ALL last).
  void finalize();
  /// Aggregate row of a group, if present.
  MetricRow const *find(std::string const &method, double af, int acs) const;
};

void write_report_csv(std::ostream &os, MetricsReport const &report);
void write_report_csv(std::string const &path, MetricsReport const &report);
MetricsReport read_report_csv(std::istream &is);
MetricsReport read_report_csv(std::string const &path);

struct ScenarioConfig
{
  std::string name; // calib-1d | calib-2d | calibless | lesion | acs-sweep
  CohortConfig cohort;
  Split split = Split::test;
  /// zf, cg-sense, pfista, jsense, jdsi, jdsi-frozen-acs, jdsi-frozen-jsense;
  /// empty runs the scenario's default list.
  std::vector<std::string> methods;
  /// Nominal ACS counts to run; empty runs every setting of the scenario.
  std::vector<int> acs;
  ReconSettings recon;
  /// Checkpoint paths may contain "{acs}", replaced by each setting's
  /// nominal ACS count so every setting can use its own networks.
  std::string jdsi_checkpoint;
  std::string frozen_acs_checkpoint;
  std::string frozen_jsense_checkpoint;
  std::string out_dir;      // CSV, PGMs and phase dumps; empty writes nothing
  int artifact_samples = 1; // samples per setting that get PGMs and dumps
  int threads = 1;
  int lesions = 2; // test lesions for the lesion scenario
};

struct ScenarioSetting
{
  MaskSpec mask;
};

std::vector<ScenarioSetting> scenario_settings(std::string const &name);
std::vector<std::string> default_methods(std::string const &name);

/// Evaluates every requested method on the held-out split for each setting.
MetricsReport run_scenario(ScenarioConfig const &cfg);

} // namespace jdsi::harness
