// jdsi command line: data synthesis, masks, reconstruction, training,
// evaluation, scenarios and reports.

#include "CLI11.hpp"

#include "jdsi/container.hpp"
#include "jdsi/error.hpp"
#include "jdsi/harness/dataset.hpp"
#include "jdsi/harness/pgm.hpp"
#include "jdsi/harness/recon.hpp"
#include "jdsi/harness/scenario.hpp"
#include "jdsi/metrics.hpp"
#include "jdsi/nn/complex_ops.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace jdsi;
using namespace jdsi::harness;

namespace {

struct CohortFlags
{
  CohortConfig c;
  int size = 64;

  void add(CLI::App *app)
  {
    app->add_option("--size", size, "image side (square grid)")->capture_default_str();
    app->add_option("--coils", c.coils, "receive coils")->capture_default_str();
    app->add_option("--train", c.train, "training samples")->capture_default_str();
    app->add_option("--val", c.val, "validation samples")->capture_default_str();
    app->add_option("--test", c.test, "test samples")->capture_default_str();
    app->add_option("--train-lesions", c.train_lesions, "lesions per training phantom")->capture_default_str();
    app->add_option("--test-lesions", c.test_lesions, "lesions per val/test phantom")->capture_default_str();
    app->add_option("--noise", c.noise_sigma, "k-space noise sigma per component")->capture_default_str();
  }
  CohortConfig get(std::uint64_t seed) const
  {
    CohortConfig r = c;
    r.height = size;
    r.width = size;
    r.seed = seed;
    return r;
  }
};

struct MaskFlags
{
  MaskSpec m;

  void add(CLI::App *app)
  {
    app->add_option("--af", m.af, "acceleration factor")->capture_default_str();
    app->add_option("--acs", m.acs, "nominal ACS count (0 = calibrationless)")->capture_default_str();
    app->add_flag("--2d", m.two_d, "2D random pattern instead of 1D columns");
  }
};

Split parse_split(std::string const &s)
{
  if (s == "train") {
    return Split::train;
  }
  if (s == "val") {
    return Split::val;
  }
  if (s == "test") {
    return Split::test;
  }
  throw UsageError("unknown split '" + s + "'");
}

std::vector<io::Record> sample_records(Sample const &s)
{
  return {io::to_record(s.truth, "truth"), io::to_record(s.true_maps, "true_maps"), io::to_record(s.full_kspace, "kspace")};
}

bool has(std::vector<io::Record> const &recs, std::string const &name)
{
  for (auto const &r : recs) {
    if (io::base_name(r.name) == name) {
      return true;
    }
  }
  return false;
}

void apply_settings(net::JdsiConfig &cfg, std::vector<std::string> const &sets)
{
  for (auto const &kv : sets) {
    auto const eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + kv + "' is not key=value");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
}

ReconSettings recon_settings(int cg_iters, double cg_tol, double lam, int pf_iters)
{
  ReconSettings s;
  s.cg_iters = cg_iters;
  s.cg_tol = cg_tol;
  s.pfista_lambda = lam;
  s.pfista_iters = pf_iters;
  return s;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Joint sensitivity estimation and image reconstruction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "seed for cohorts, masks and weights")->capture_default_str();

  // synth
  auto *synth = app.add_subcommand("synth", "generate a phantom cohort");
  CohortFlags synth_cohort;
  synth_cohort.add(synth);
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();

  // mask
  auto *mask_cmd = app.add_subcommand("mask", "write an undersampling mask");
  MaskFlags mask_flags;
  mask_flags.add(mask_cmd);
  int mask_size = 64, mask_id = 0;
  std::string mask_out;
  mask_cmd->add_option("--size", mask_size, "grid side")->capture_default_str();
  mask_cmd->add_option("--sample-id", mask_id, "sample the mask belongs to")->capture_default_str();
  mask_cmd->add_option("--out", mask_out, "mask container")->required();

  // recon
  auto *recon = app.add_subcommand("recon", "reconstruct one acquisition");
  std::string rc_in, rc_mask, rc_out, rc_method = "cg-sense", rc_maps = "acs", rc_ckpt;
  int rc_cg = 50, rc_pf = 100;
  double rc_tol = 1e-6, rc_lam = 1e-3;
  bool rc_phases = false;
  recon->add_option("--input", rc_in, "sample container with fully sampled 'kspace'")->required();
  recon->add_option("--mask", rc_mask, "mask container")->required();
  recon->add_option("--method", rc_method, "zf|cg-sense|pfista|jsense|jdsi")->capture_default_str();
  recon->add_option("--maps", rc_maps, "gt|acs|jsense|learned")->capture_default_str();
  recon->add_option("--checkpoint", rc_ckpt, "network checkpoint for jdsi");
  recon->add_option("--cg-iters", rc_cg)->capture_default_str();
  recon->add_option("--cg-tol", rc_tol)->capture_default_str();
  recon->add_option("--pfista-lambda", rc_lam)->capture_default_str();
  recon->add_option("--pfista-iters", rc_pf)->capture_default_str();
  recon->add_flag("--phases", rc_phases, "store per-phase x and S (jdsi)");
  recon->add_option("--out", rc_out, "output container")->required();

  // train
  auto *train_cmd = app.add_subcommand("train", "train a JDSI network on a phantom cohort");
  std::string tr_cfg, tr_out, tr_hist, tr_ext;
  std::vector<std::string> tr_set;
  CohortFlags tr_cohort;
  MaskFlags tr_mask;
  int tr_threads = 0;
  train_cmd->add_option("--config", tr_cfg, "key=value config file");
  train_cmd->add_option("--set", tr_set, "config override key=value (repeatable)");
  train_cmd->add_option("--train", tr_cohort.c.train, "training samples")->capture_default_str();
  train_cmd->add_option("--val", tr_cohort.c.val, "validation samples")->capture_default_str();
  train_cmd->add_option("--train-lesions", tr_cohort.c.train_lesions)->capture_default_str();
  train_cmd->add_option("--noise", tr_cohort.c.noise_sigma)->capture_default_str();
  tr_mask.add(train_cmd);
  train_cmd->add_option("--ext-maps", tr_ext, "acs|jsense: train a frozen-maps network on these maps");
  train_cmd->add_option("--threads", tr_threads, "worker threads (0 keeps the config value)");
  train_cmd->add_option("--out", tr_out, "checkpoint path")->required();
  train_cmd->add_option("--history", tr_hist, "per-epoch CSV");

  // eval
  auto *eval_cmd = app.add_subcommand("eval", "metrics of reconstructions against references");
  std::vector<std::string> ev_recon, ev_ref;
  std::string ev_label = "recon", ev_out;
  eval_cmd->add_option("--recon", ev_recon, "recon containers")->required();
  eval_cmd->add_option("--ref", ev_ref, "sample containers, one per recon")->required();
  eval_cmd->add_option("--label", ev_label, "method label in the CSV")->capture_default_str();
  eval_cmd->add_option("--out", ev_out, "CSV path (stdout when omitted)");

  // scenario
  auto *scen = app.add_subcommand("scenario", "run an experiment scenario");
  ScenarioConfig sc;
  CohortFlags sc_cohort;
  std::string sc_split = "test";
  int sc_cg = 50, sc_pf = 100;
  double sc_tol = 1e-6, sc_lam = 1e-3;
  scen->add_option("--name", sc.name, "calib-1d|calib-2d|calibless|lesion|acs-sweep")->required();
  sc_cohort.add(scen);
  scen->add_option("--split", sc_split, "train|val|test")->capture_default_str();
  scen->add_option("--methods", sc.methods, "methods to evaluate")->delimiter(',');
  scen->add_option("--acs", sc.acs, "only settings with these nominal ACS counts")->delimiter(',');
  scen->add_option("--checkpoint", sc.jdsi_checkpoint, "JDSI checkpoint ({acs} expands per setting)");
  scen->add_option("--frozen-acs", sc.frozen_acs_checkpoint, "frozen-maps checkpoint trained on ACS maps");
  scen->add_option("--frozen-jsense", sc.frozen_jsense_checkpoint, "frozen-maps checkpoint trained on JSENSE maps");
  scen->add_option("--artifact-samples", sc.artifact_samples, "samples per setting with PGMs and phase dumps")
    ->capture_default_str();
  scen->add_option("--lesions", sc.lesions, "test lesions in the lesion scenario")->capture_default_str();
  scen->add_option("--threads", sc.threads, "parallel samples")->capture_default_str();
  scen->add_option("--cg-iters", sc_cg)->capture_default_str();
  scen->add_option("--cg-tol", sc_tol)->capture_default_str();
  scen->add_option("--pfista-lambda", sc_lam)->capture_default_str();
  scen->add_option("--pfista-iters", sc_pf)->capture_default_str();
  scen->add_option("--out", sc.out_dir, "artifact directory")->required();

  // report
  auto *report = app.add_subcommand("report", "re-aggregate CSVs and render PGMs");
  std::vector<std::string> rp_csv, rp_recon;
  std::string rp_ref, rp_out;
  report->add_option("--csv", rp_csv, "per-sample CSVs to merge");
  report->add_option("--recon", rp_recon, "recon containers rendered with a shared scale");
  report->add_option("--ref", rp_ref, "sample container the recons are compared with");
  report->add_option("--out", rp_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    std::cerr << "error code=usage message=\"" << e.what() << "\"\n";
    return 2;
  }

  try {
    if (*synth) {
      auto const cfg = synth_cohort.get(seed);
      fs::create_directories(synth_out);
      write_manifest((fs::path(synth_out) / "manifest.txt").string(), cfg);
      int const total = cfg.train + cfg.val + cfg.test;
      for (int id = 0; id < total; ++id) {
        io::write((fs::path(synth_out) / fmt::format("sample_{:04d}.jks", id)).string(), sample_records(cohort_sample(cfg, id)));
      }
      std::cout << "wrote " << total << " samples to " << synth_out << '\n';
    } else if (*mask_cmd) {
      auto const m = sample_mask(mask_flags.m, mask_size, mask_size, seed, mask_id);
      io::write(mask_out, {io::to_record(m, "mask")});
      std::cout << describe(m) << '\n';
    } else if (*recon) {
      auto const recs = io::read(rc_in);
      if (!has(recs, "kspace")) {
        throw InvalidInput(rc_in + " has no 'kspace' record");
      }
      auto const full_k = io::to_stack(io::find(recs, "kspace"));
      auto const mask = io::to_mask(io::find(io::read(rc_mask), "mask"));
      CoilStack y = full_k;
      apply_mask(y, mask);
      auto const full = ifft2c(full_k);
      auto const method = parse_method(rc_method);
      std::unique_ptr<net::JdsiNet<float>> net;
      if (method == Method::jdsi) {
        net = load_network(rc_ckpt);
      }
      auto const r = run_recon(
        method, parse_maps(rc_maps), y, mask, &full, net.get(), recon_settings(rc_cg, rc_tol, rc_lam, rc_pf), rc_phases);
      std::vector<io::Record> out{io::to_record(r.x, "x")};
      if (r.maps) {
        out.push_back(io::to_record(*r.maps, "maps"));
      }
      for (auto const &p : r.phases) {
        out.push_back(io::to_record(nn::unpack_image(p.x), "x." + std::to_string(p.k)));
        out.push_back(io::to_record(nn::unpack_maps(p.S), "S." + std::to_string(p.k)));
      }
      io::write(rc_out, out);
      if (has(recs, "truth")) {
        auto const truth = io::to_image(io::find(recs, "truth"));
        std::cout << fmt::format("rlne {:.6f} psnr {:.3f} ssim {:.4f}\n", rlne(r.x, truth), psnr(r.x, truth), ssim(r.x, truth));
      }
    } else if (*train_cmd) {
      net::JdsiConfig cfg = tr_cfg.empty() ? net::JdsiConfig::desk() : net::load_config(tr_cfg);
      cfg.seed = seed;
      apply_settings(cfg, tr_set);
      std::optional<MapSource> ext;
      if (!tr_ext.empty()) {
        ext = parse_maps(tr_ext);
        cfg.frozen_maps = true;
      }
      if (cfg.frozen_maps && !ext) {
        throw ConfigError("frozen_maps training needs --ext-maps");
      }
      if (tr_threads > 0) {
        cfg.threads = tr_threads;
      }
      CohortConfig cohort = tr_cohort.c;
      cohort.height = cfg.height;
      cohort.width = cfg.width;
      cohort.coils = cfg.coils;
      cohort.seed = seed;
      auto const train_set = make_examples(cohort, Split::train, tr_mask.m, ext);
      auto const val_set = make_examples(cohort, Split::val, tr_mask.m, ext);
      net::JdsiNet<float> model(cfg);
      net::TrainOptions opts;
      opts.checkpoint_path = tr_out;
      opts.on_epoch = [](net::EpochRecord const &r) {
        std::cout << fmt::format(
                       "epoch {} lr {:.3g} loss {:.5g} val_loss {:.5g} val_rlne {:.4f} val_psnr {:.2f} val_ssim {:.4f} {:.1f}s\n",
                       r.epoch, r.lr, r.train_loss, r.val_loss, r.val_rlne, r.val_psnr, r.val_ssim, r.seconds)
                  << std::flush;
      };
      auto const res = net::train(model, train_set, val_set, opts);
      if (!tr_hist.empty()) {
        net::write_history_csv(tr_hist, res.history);
      }
      if (res.aborted) {
        throw DivergenceError("training stopped: " + res.reason);
      }
    } else if (*eval_cmd) {
      if (ev_recon.size() != ev_ref.size()) {
        throw UsageError("--recon and --ref need the same number of files");
      }
      MetricsReport rep;
      for (std::size_t i = 0; i < ev_recon.size(); ++i) {
        auto const x = io::to_image(io::find(io::read(ev_recon[i]), "x"));
        auto const truth = io::to_image(io::find(io::read(ev_ref[i]), "truth"));
        MetricRow r;
        r.scenario = "eval";
        r.method = ev_label;
        r.sample_id = static_cast<int>(i);
        r.rlne = rlne(x, truth);
        r.psnr = psnr(x, truth);
        r.ssim = ssim(x, truth);
        rep.rows.push_back(r);
      }
      rep.finalize();
      if (ev_out.empty()) {
        write_report_csv(std::cout, rep);
      } else {
        write_report_csv(ev_out, rep);
      }
    } else if (*scen) {
      sc.cohort = sc_cohort.get(seed);
      sc.split = parse_split(sc_split);
      sc.recon = recon_settings(sc_cg, sc_tol, sc_lam, sc_pf);
      auto const rep = run_scenario(sc);
      for (auto const &r : rep.rows) {
        if (r.aggregate()) {
          std::cout << fmt::format(
            "{} {:<20} AF {:g} ACS {:>2} rlne {:.4f}+-{:.4f} psnr {:.2f}+-{:.2f} ssim {:.4f}+-{:.4f}\n", r.scenario,
            r.method, r.af, r.acs, r.rlne, r.rlne_std, r.psnr, r.psnr_std, r.ssim, r.ssim_std);
        }
      }
    } else if (*report) {
      fs::create_directories(rp_out);
      if (!rp_csv.empty()) {
        MetricsReport merged;
        for (auto const &p : rp_csv) {
          auto const r = read_report_csv(p);
          merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
        }
        merged.finalize();
        write_report_csv((fs::path(rp_out) / "report.csv").string(), merged);
      }
      if (!rp_recon.empty()) {
        if (rp_ref.empty()) {
          throw UsageError("--recon rendering needs --ref");
        }
        auto const truth = io::to_image(io::find(io::read(rp_ref), "truth"));
        double peak = 0.0;
        for (auto const &v : truth.data) {
          peak = std::max(peak, std::abs(v));
        }
        export_pgm(truth, (fs::path(rp_out) / "reference.pgm").string(), PgmScale::fixed_max, peak > 0 ? peak : 1.0);
        std::vector<ComplexImage> xs, errs;
        double err_max = 0.0;
        for (auto const &p : rp_recon) {
          xs.push_back(io::to_image(io::find(io::read(p), "x")));
          errs.push_back(error_map(xs.back(), truth));
          for (auto const &v : errs.back().data) {
            err_max = std::max(err_max, v.real());
          }
        }
        for (std::size_t i = 0; i < xs.size(); ++i) {
          std::string const stem = (fs::path(rp_out) / fs::path(rp_recon[i]).stem()).string();
          export_pgm(xs[i], stem + ".pgm", PgmScale::fixed_max, peak > 0 ? peak : 1.0);
          export_pgm(errs[i], stem + "_error.pgm", PgmScale::fixed_max, err_max > 0 ? err_max : 1.0);
        }
      }
    }
  } catch (Error const &e) {
    std::cerr << "error code=" << e.code() << " message=\"" << e.what() << "\"\n";
    return 1;
  } catch (std::exception const &e) {
    std::cerr << "error code=internal message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}
