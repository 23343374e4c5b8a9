#include "jdsi/harness/scenario.hpp"

#include "jdsi/calibration.hpp"
#include "jdsi/container.hpp"
#include "jdsi/error.hpp"
#include "jdsi/harness/pgm.hpp"
#include "jdsi/metrics.hpp"
#include "jdsi/nn/complex_ops.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace jdsi::harness {

namespace fs = std::filesystem;

std::vector<net::Example<float>> make_examples(
  CohortConfig const &cohort, Split split, MaskSpec const &mask, std::optional<MapSource> ext,
  ReconSettings const &settings)
{
  auto const ids = split_ids(cohort, split);
  std::vector<net::Example<float>> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int const id = ids[i];
    auto const s = cohort_sample(cohort, id);
    auto const full = coil_images(s);
    auto const m = sample_mask(mask, cohort.height, cohort.width, cohort.seed, id);
    CoilStack y = s.full_kspace;
    apply_mask(y, m);
    auto const ref_maps = calib::gt_maps(full);
    std::optional<SenseMaps> em;
    if (ext) {
      em = estimate_maps(*ext, y, m, &full, settings);
    }
    out[i] = net::make_example<float>(y, m, full, ref_maps, em ? &*em : nullptr);
  }
  return out;
}

// ---- report ----

namespace {

auto group_key(MetricRow const &r) { return std::make_tuple(r.scenario, r.method, r.af, r.acs); }

std::string num(double v)
{
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  return fmt::format("{:.17g}", v);
}

double parse_num(std::string const &s)
{
  if (s == "inf") {
    return INFINITY;
  }
  if (s == "-inf") {
    return -INFINITY;
  }
  std::size_t used = 0;
  double const v = std::stod(s, &used);
  if (used != s.size()) {
    throw InvalidInput("bad number '" + s + "' in report");
  }
  return v;
}

std::vector<std::string> split_csv(std::string const &line)
{
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    f.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    f.emplace_back();
  }
  return f;
}

char const *const kHeader = "scenario,method,AF,ACS,sample_id,rlne,psnr_db,ssim,rlne_std,psnr_db_std,ssim_std";

} // namespace

void MetricsReport::finalize()
{
  std::erase_if(rows, [](MetricRow const &r) { return r.aggregate(); });
  std::map<decltype(group_key(rows.front())), std::vector<MetricRow const *>> groups;
  std::sort(rows.begin(), rows.end(), [](MetricRow const &a, MetricRow const &b) {
    return std::make_tuple(a.scenario, a.method, a.af, a.acs, a.sample_id) <
           std::make_tuple(b.scenario, b.method, b.af, b.acs, b.sample_id);
  });
  for (auto const &r : rows) {
    groups[group_key(r)].push_back(&r);
  }
  std::vector<MetricRow> agg;
  for (auto const &[key, members] : groups) {
    std::vector<double> rl, ps, ss;
    for (auto const *m : members) {
      rl.push_back(m->rlne);
      ps.push_back(m->psnr);
      ss.push_back(m->ssim);
    }
    MetricRow a = *members.front();
    a.sample_id = -1;
    auto const r = mean_std(rl);
    auto const p = mean_std(ps);
    auto const s = mean_std(ss);
    a.rlne = r.mean;
    a.rlne_std = r.std;
    a.psnr = p.mean;
    a.psnr_std = p.std;
    a.ssim = s.mean;
    a.ssim_std = s.std;
    agg.push_back(a);
  }
  std::vector<MetricRow> merged;
  std::size_t ai = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    merged.push_back(rows[i]);
    bool const group_ends = i + 1 == rows.size() || group_key(rows[i + 1]) != group_key(rows[i]);
    if (group_ends) {
      merged.push_back(agg[ai++]);
    }
  }
  rows = std::move(merged);
}

MetricRow const *MetricsReport::find(std::string const &method, double af, int acs) const
{
  for (auto const &r : rows) {
    if (r.aggregate() && r.method == method && r.af == af && r.acs == acs) {
      return &r;
    }
  }
  return nullptr;
}

void write_report_csv(std::ostream &os, MetricsReport const &report)
{
  os << kHeader << '\n';
  for (auto const &r : report.rows) {
    os << r.scenario << ',' << r.method << ',' << num(r.af) << ',' << r.acs << ','
       << (r.aggregate() ? std::string("ALL") : std::to_string(r.sample_id)) << ',' << num(r.rlne) << ','
       << num(r.psnr) << ',' << num(r.ssim);
    if (r.aggregate()) {
      os << ',' << num(r.rlne_std) << ',' << num(r.psnr_std) << ',' << num(r.ssim_std) << '\n';
    } else {
      os << ",,,\n";
    }
  }
}

void write_report_csv(std::string const &path, MetricsReport const &report)
{
  std::ofstream os(path);
  if (!os) {
    throw InvalidInput("cannot write " + path);
  }
  write_report_csv(os, report);
}

MetricsReport read_report_csv(std::istream &is)
{
  MetricsReport rep;
  std::string line;
  if (!std::getline(is, line) || line != kHeader) {
    throw InvalidInput("report CSV header mismatch");
  }
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    auto const f = split_csv(line);
    if (f.size() != 11) {
      throw InvalidInput("report row has " + std::to_string(f.size()) + " fields: " + line);
    }
    MetricRow r;
    r.scenario = f[0];
    r.method = f[1];
    r.af = parse_num(f[2]);
    r.acs = std::stoi(f[3]);
    r.sample_id = f[4] == "ALL" ? -1 : std::stoi(f[4]);
    r.rlne = parse_num(f[5]);
    r.psnr = parse_num(f[6]);
    r.ssim = parse_num(f[7]);
    if (r.aggregate()) {
      r.rlne_std = parse_num(f[8]);
      r.psnr_std = parse_num(f[9]);
      r.ssim_std = parse_num(f[10]);
    }
    rep.rows.push_back(r);
  }
  return rep;
}

MetricsReport read_report_csv(std::string const &path)
{
  std::ifstream is(path);
  if (!is) {
    throw InvalidInput("cannot read " + path);
  }
  return read_report_csv(is);
}

// ---- scenarios ----

std::vector<ScenarioSetting> scenario_settings(std::string const &name)
{
  auto one_d = [](double af, int acs) { return ScenarioSetting{MaskSpec{false, af, acs}}; };
  auto two_d = [](double af, int acs) { return ScenarioSetting{MaskSpec{true, af, acs}}; };
  if (name == "calib-1d") {
    return {one_d(4, 24), one_d(4, 8), one_d(8, 24), one_d(8, 8)};
  }
  if (name == "calib-2d") {
    return {two_d(10, 8)};
  }
  if (name == "calibless") {
    return {one_d(4, 0), two_d(8, 0)};
  }
  if (name == "lesion") {
    return {one_d(4, 24)};
  }
  if (name == "acs-sweep") {
    return {one_d(4, 24), one_d(4, 16), one_d(4, 8), one_d(4, 4)};
  }
  throw UsageError("unknown scenario '" + name + "' (calib-1d|calib-2d|calibless|lesion|acs-sweep)");
}

std::vector<std::string> default_methods(std::string const &name)
{
  if (name == "acs-sweep") {
    return {"jdsi", "jdsi-frozen-acs", "jdsi-frozen-jsense", "cg-sense"};
  }
  if (name == "calibless") {
    return {"zf", "jdsi"};
  }
  scenario_settings(name);
  return {"zf", "cg-sense", "pfista", "jsense", "jdsi"};
}

namespace {

struct Nets
{
  std::shared_ptr<net::JdsiNet<float>> full, frozen_acs, frozen_jsense;
};

struct Outcome
{
  std::string label;
  ComplexImage x;
  std::vector<net::PhaseState<float>> phases;
};

bool needs_acs(std::string const &m) { return m == "cg-sense" || m == "pfista" || m == "jsense"; }

Outcome run_method(
  std::string const &m, Nets &nets, CoilStack const &y, SamplingMask const &mask, CoilStack const &full,
  ReconSettings const &rs, bool has_acs, bool keep_phases)
{
  Outcome o;
  o.label = m;
  // without calibration data the classical methods get the reference maps
  MapSource const classical = has_acs ? MapSource::acs : MapSource::gt;
  if (needs_acs(m) && !has_acs) {
    o.label += "/gt";
  }
  if (m == "zf") {
    o.x = run_recon(Method::zf, MapSource::acs, y, mask, &full, nullptr, rs).x;
  } else if (m == "cg-sense") {
    o.x = run_recon(Method::cg_sense, classical, y, mask, &full, nullptr, rs).x;
  } else if (m == "pfista") {
    o.x = run_recon(Method::pfista, classical, y, mask, &full, nullptr, rs).x;
  } else if (m == "jsense") {
    o.x = run_recon(Method::jsense, has_acs ? MapSource::acs : MapSource::gt, y, mask, &full, nullptr, rs).x;
  } else if (m == "jdsi" || m == "jdsi-frozen-acs" || m == "jdsi-frozen-jsense") {
    auto *n = m == "jdsi" ? nets.full.get() : m == "jdsi-frozen-acs" ? nets.frozen_acs.get() : nets.frozen_jsense.get();
    MapSource const src = m == "jdsi" ? MapSource::learned : m == "jdsi-frozen-acs" ? MapSource::acs : MapSource::jsense;
    if (src != MapSource::learned && !has_acs) {
      throw ScenarioError(m + " needs ACS data for its external maps");
    }
    auto r = run_recon(Method::jdsi, src, y, mask, &full, n, rs, keep_phases);
    o.x = std::move(r.x);
    o.phases = std::move(r.phases);
  } else {
    throw UsageError("unknown scenario method '" + m + "'");
  }
  return o;
}

void dump_phases(std::string const &path, std::vector<net::PhaseState<float>> const &phases)
{
  std::vector<io::Record> recs;
  for (auto const &p : phases) {
    recs.push_back(io::to_record(nn::unpack_image(p.x), "x." + std::to_string(p.k)));
    recs.push_back(io::to_record(nn::unpack_maps(p.S), "S." + std::to_string(p.k)));
  }
  io::write(path, recs);
}

} // namespace

MetricsReport run_scenario(ScenarioConfig const &cfg)
{
  auto const settings = scenario_settings(cfg.name);
  auto const methods = cfg.methods.empty() ? default_methods(cfg.name) : cfg.methods;
  CohortConfig cohort = cfg.cohort;
  if (cfg.name == "lesion" && cohort.test_lesions == 0) {
    cohort.test_lesions = cfg.lesions;
  }

  auto wants = [&](std::string const &m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  // checkpoint paths may carry an {acs} placeholder for per-setting networks
  std::map<std::string, std::shared_ptr<net::JdsiNet<float>>> loaded;
  auto load = [&](std::string const &pattern, int acs) {
    std::string path = pattern;
    for (auto pos = path.find("{acs}"); pos != std::string::npos; pos = path.find("{acs}")) {
      path.replace(pos, 5, std::to_string(acs));
    }
    auto &slot = loaded[path];
    if (!slot) {
      slot = load_network(path);
      auto const &c = slot->config();
      if (c.height != cohort.height || c.width != cohort.width || c.coils != cohort.coils) {
        throw ScenarioError("checkpoint geometry does not match the cohort: " + path);
      }
    }
    return slot;
  };
  auto nets_for = [&](int acs) {
    Nets nets;
    if (wants("jdsi")) {
      nets.full = load(cfg.jdsi_checkpoint, acs);
      if (nets.full->config().frozen_maps) {
        throw ScenarioError("jdsi checkpoint is a frozen-maps network");
      }
    }
    if (wants("jdsi-frozen-acs")) {
      nets.frozen_acs = load(cfg.frozen_acs_checkpoint, acs);
    }
    if (wants("jdsi-frozen-jsense")) {
      nets.frozen_jsense = load(cfg.frozen_jsense_checkpoint, acs);
    }
    for (auto const *n : {nets.frozen_acs.get(), nets.frozen_jsense.get()}) {
      if (n && !n->config().frozen_maps) {
        throw ScenarioError("ablation checkpoint is not a frozen-maps network");
      }
    }
    return nets;
  };
  std::vector<ScenarioSetting> chosen;
  for (auto const &st : settings) {
    if (cfg.acs.empty() || std::find(cfg.acs.begin(), cfg.acs.end(), st.mask.acs) != cfg.acs.end()) {
      chosen.push_back(st);
    }
  }
  if (chosen.empty()) {
    throw ScenarioError("no setting of scenario '" + cfg.name + "' matches the requested ACS counts");
  }
  // fail on missing checkpoints before any reconstruction runs
  std::vector<Nets> per_setting;
  for (auto const &st : chosen) {
    per_setting.push_back(nets_for(st.mask.acs));
  }

  bool const artifacts = !cfg.out_dir.empty();
  if (artifacts) {
    fs::create_directories(cfg.out_dir);
  }

  auto const ids = split_ids(cohort, cfg.split);
  MetricsReport report;
  for (std::size_t si = 0; si < chosen.size(); ++si) {
    auto const &st = chosen[si];
    auto &nets = per_setting[si];
    bool const has_acs = st.mask.acs > 0;
    std::string const tag = fmt::format("af{:g}_acs{}", st.mask.af, st.mask.acs);
    std::vector<std::vector<MetricRow>> per_sample(ids.size());
    std::vector<std::string> errors(ids.size());
    int const nthreads = std::max(1, cfg.threads);
#pragma omp parallel for schedule(dynamic) num_threads(nthreads) if (nthreads > 1)
    for (std::size_t i = 0; i < ids.size(); ++i) {
      try {
        int const id = ids[i];
        auto const s = cohort_sample(cohort, id);
        auto const full = coil_images(s);
        auto const mask = sample_mask(st.mask, cohort.height, cohort.width, cohort.seed, id);
        CoilStack y = s.full_kspace;
        apply_mask(y, mask);
        bool const keep = artifacts && static_cast<int>(i) < cfg.artifact_samples;
        std::vector<Outcome> outs;
        for (auto const &m : methods) {
          outs.push_back(run_method(m, nets, y, mask, full, cfg.recon, has_acs, keep));
        }
        for (auto const &o : outs) {
          MetricRow r;
          r.scenario = cfg.name;
          r.method = o.label;
          r.af = st.mask.af;
          r.acs = st.mask.acs;
          r.sample_id = id;
          r.rlne = rlne(o.x, s.truth);
          r.psnr = psnr(o.x, s.truth);
          r.ssim = ssim(o.x, s.truth);
          per_sample[i].push_back(r);
        }
        if (keep) {
          fs::path const dir = fs::path(cfg.out_dir) / cfg.name / tag;
          fs::create_directories(dir);
          std::string const stem = (dir / fmt::format("s{}_", id)).string();
          double peak = 0.0;
          for (auto const &v : s.truth.data) {
            peak = std::max(peak, std::abs(v));
          }
          export_pgm(s.truth, stem + "reference.pgm", PgmScale::fixed_max, peak);
          std::vector<ComplexImage> errs;
          double err_max = 0.0;
          for (auto const &o : outs) {
            errs.push_back(error_map(o.x, s.truth));
            for (auto const &v : errs.back().data) {
              err_max = std::max(err_max, v.real());
            }
          }
          for (std::size_t k = 0; k < outs.size(); ++k) {
            std::string label = outs[k].label;
            std::replace(label.begin(), label.end(), '/', '-');
            export_pgm(outs[k].x, stem + label + ".pgm", PgmScale::fixed_max, peak);
            export_pgm(errs[k], stem + label + "_error.pgm", PgmScale::fixed_max, err_max > 0 ? err_max : 1.0);
            if (!outs[k].phases.empty()) {
              dump_phases(stem + label + "_phases.jks", outs[k].phases);
            }
          }
        }
      } catch (Error const &e) {
        errors[i] = e.code() + ": " + e.what();
      } catch (std::exception const &e) {
        errors[i] = e.what();
      }
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!errors[i].empty()) {
        throw ScenarioError("sample " + std::to_string(ids[i]) + " (" + tag + "): " + errors[i]);
      }
      report.rows.insert(report.rows.end(), per_sample[i].begin(), per_sample[i].end());
    }
  }
  report.finalize();
  if (artifacts) {
    write_report_csv((fs::path(cfg.out_dir) / (cfg.name + ".csv")).string(), report);
  }
  return report;
}

} // namespace jdsi::harness
