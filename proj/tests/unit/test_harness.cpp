#include "doctest.h"
#include "support.hpp"

#include "jdsi/calibration.hpp"
#include "jdsi/container.hpp"
#include "jdsi/harness/dataset.hpp"
#include "jdsi/harness/pgm.hpp"
#include "jdsi/harness/scenario.hpp"
#include "jdsi/metrics.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace jdsi;
using namespace jdsi::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(std::string const &name)
{
  auto const p = fs::temp_directory_path() / ("jdsi_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ComplexImage real_image(std::vector<double> const &v, int h, int w)
{
  ComplexImage x(h, w);
  for (std::size_t i = 0; i < v.size(); ++i) {
    x.data[i] = v[i];
  }
  return x;
}

// Straightforward SSIM: explicit window loops, no shared code with the library.
double ssim_oracle(std::vector<double> const &a, std::vector<double> const &b, int h, int w, double range)
{
  double win[11][11];
  double tot = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      tot += win[i][j];
    }
  }
  double const c1 = (0.01 * range) * (0.01 * range);
  double const c2 = (0.03 * range) * (0.03 * range);
  double acc = 0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y) {
    for (int x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          ma += win[i][j] / tot * a[(y + i) * w + x + j];
          mb += win[i][j] / tot * b[(y + i) * w + x + j];
        }
      }
      double va = 0, vb = 0, cab = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          double const da = a[(y + i) * w + x + j] - ma;
          double const db = b[(y + i) * w + x + j] - mb;
          va += win[i][j] / tot * da * da;
          vb += win[i][j] / tot * db * db;
          cab += win[i][j] / tot * da * db;
        }
      }
      acc += ((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return acc / count;
}

std::vector<std::uint8_t> read_pgm(std::string const &path, int &h, int &w)
{
  std::ifstream f(path, std::ios::binary);
  std::string magic;
  int maxv = 0;
  f >> magic >> w >> h >> maxv;
  f.get();
  REQUIRE(magic == "P5");
  REQUIRE(maxv == 255);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w);
  f.read(reinterpret_cast<char *>(px.data()), static_cast<std::streamsize>(px.size()));
  REQUIRE(f.gcount() == static_cast<std::streamsize>(px.size()));
  return px;
}

std::string slurp(std::string const &path)
{
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

} // namespace

TEST_CASE("RLNE")
{
  std::mt19937_64 g(81);
  auto const x = testing::rand_image(16, 16, g);
  CHECK(rlne(x, x) == 0.0);
  CHECK(rlne(ComplexImage(16, 16), x) == doctest::Approx(1.0).epsilon(1e-15));
  auto y = x;
  for (auto &v : y.data) {
    v *= 1.1;
  }
  CHECK(std::abs(rlne(y, x) - 0.1) < 1e-12);
  // magnitudes only: a global phase is invisible
  auto z = x;
  for (auto &v : z.data) {
    v *= std::polar(1.0, 0.7);
  }
  CHECK(rlne(z, x) < 1e-15);
  CHECK_THROWS(rlne(x, ComplexImage(16, 16)));
  CHECK_THROWS_AS(rlne(x, ComplexImage(8, 16)), ShapeError);
}

TEST_CASE("PSNR")
{
  // reference max 1, every pixel off by 0.1 -> MSE 0.01 -> 20 dB
  std::vector<double> ref(64, 0.5), rec(64);
  ref[5] = 1.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rec[i] = ref[i] - 0.1;
  }
  auto const r = real_image(ref, 8, 8);
  CHECK(psnr(real_image(rec, 8, 8), r) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::isinf(psnr(r, r)));
  std::vector<double> r2(ref), c2(rec);
  for (std::size_t i = 0; i < r2.size(); ++i) {
    r2[i] *= 2;
    c2[i] *= 2;
  }
  CHECK(psnr(real_image(c2, 8, 8), real_image(r2, 8, 8)) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("SSIM")
{
  std::mt19937_64 g(83);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(32 * 32), b(32 * 32);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = u(g);
    b[i] = std::clamp(a[i] + 0.2 * (u(g) - 0.5), 0.0, 1.0);
  }
  double range = *std::max_element(a.begin(), a.end());
  auto const ia = real_image(a, 32, 32);
  auto const ib = real_image(b, 32, 32);
  CHECK(std::abs(ssim(ib, ia) - ssim_oracle(b, a, 32, 32, range)) < 1e-6);
  CHECK(ssim(ia, ia) == doctest::Approx(1.0).epsilon(1e-12));
  // negation disappears under the magnitude
  auto neg = ia;
  for (auto &v : neg.data) {
    v = -v;
  }
  CHECK(ssim(neg, ia) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> shifted(a);
  for (auto &v : shifted) {
    v += 5.0;
  }
  CHECK(ssim_real(shifted, a, 32, 32, range) < 1.0);
  double const s = ssim(ib, ia);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
}

TEST_CASE("mean and std")
{
  auto const m = mean_std({1.0, 2.0, 3.0, 4.0});
  CHECK(m.mean == 2.5);
  CHECK(m.std == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK(std::isinf(mean_std({1.0, INFINITY}).mean));
}

TEST_CASE("container")
{
  std::mt19937_64 g(85);
  auto const dir = scratch("container");
  std::vector<io::Record> recs;
  recs.push_back(io::to_record(testing::rand_image(6, 5, g), "x"));
  recs.push_back(io::to_record(testing::rand_stack(3, 6, 5, g), "k"));
  recs.push_back(io::to_record(testing::rand_maps(3, 6, 5, g), "maps"));
  auto const mask = make_mask_1d(16, 8, 4.0, 4, 7);
  recs.push_back(io::to_record(mask, "mask"));
  recs.push_back(io::to_record(std::vector<float>{1.5f, -2.0f}, {1, 1, 1, 2}, "p", io::RecordKind::param));
  recs.push_back(io::to_record(std::vector<double>{0.25}, {1, 1, 1, 1}, "adam", io::RecordKind::adam_state));
  auto const path = (dir / "a.jks").string();
  io::write(path, recs);
  auto const back = io::read(path);
  CHECK(back == recs);

  auto const &mr = io::find(back, "mask");
  CHECK(mr.payload.size() == 8u * 16u);
  CHECK(mr.dtype == io::DType::u8);
  auto const m2 = io::to_mask(mr);
  CHECK(m2.omega == mask.omega);
  CHECK(io::to_image(io::find(back, "x")).data == io::to_image(recs[0]).data);

  auto bytes = io::encode(recs);
  // header layout
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "JKS1");
  CHECK((bytes[4] | bytes[5] << 8) == 1);
  CHECK((bytes[6] | bytes[7] << 8 | bytes[8] << 16 | bytes[9] << 24) == 6);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    io::decode(bad);
    FAIL("bad magic accepted");
  } catch (FormatError const &e) {
    CHECK(e.offset() == 0);
  }
  bad = bytes;
  bad[4] = 9;
  try {
    io::decode(bad);
    FAIL("bad version accepted");
  } catch (FormatError const &e) {
    CHECK(e.offset() == 4);
  }
  bad.assign(bytes.begin(), bytes.end() - 3);
  try {
    io::decode(bad);
    FAIL("truncation accepted");
  } catch (FormatError const &e) {
    CHECK(e.offset() > 10);
    CHECK(e.offset() <= bad.size());
  }
  CHECK_THROWS(io::find(back, "missing"));
  CHECK_THROWS(io::read((dir / "missing.jks").string()));
}

TEST_CASE("PGM export")
{
  auto const dir = scratch("pgm");
  int h = 0, w = 0;
  auto const zero = (dir / "zero.pgm").string();
  export_pgm(ComplexImage(4, 6), zero, PgmScale::linear);
  for (auto v : read_pgm(zero, h, w)) {
    CHECK(v == 0);
  }
  CHECK(h == 4);
  CHECK(w == 6);

  ComplexImage x(2, 2);
  x.data = {cx(0, 2), cx(1, 0), cx(0.5, 0), cx(0, 0)};
  auto const p = (dir / "x.pgm").string();
  CHECK(export_pgm(x, p, PgmScale::linear) == 2.0);
  auto const px = read_pgm(p, h, w);
  CHECK(px[0] == 255);
  CHECK(px[1] == 128);
  CHECK(px[3] == 0);
  CHECK(slurp(p + ".txt").find("scale linear") != std::string::npos);

  // two methods on a shared scale
  ComplexImage y = x;
  for (auto &v : y.data) {
    v *= 0.5;
  }
  auto const a = (dir / "a.pgm").string();
  auto const b = (dir / "b.pgm").string();
  export_pgm(x, a, PgmScale::fixed_max, 4.0);
  export_pgm(y, b, PgmScale::fixed_max, 4.0);
  CHECK(slurp(a + ".txt") == slurp(b + ".txt"));
  CHECK(slurp(a + ".txt").find("max 4") != std::string::npos);
  CHECK(read_pgm(a, h, w)[0] == 128);
  CHECK(read_pgm(b, h, w)[0] == 64);
  CHECK_THROWS(export_pgm(x, a, PgmScale::fixed_max, 0.0));

  auto const e = error_map(x, y);
  CHECK(e.data[0] == cx(1.0));
  CHECK(e.data[3] == cx(0.0));
}

TEST_CASE("report aggregation")
{
  MetricsReport rep;
  std::mt19937_64 g(87);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::string m : {"zf", "cg-sense"}) {
    for (int acs : {24, 8}) {
      for (int id = 0; id < 5; ++id) {
        rep.rows.push_back({"calib-1d", m, 4.0, acs, 210 + id, u(g), 20 + 10 * u(g), u(g)});
      }
    }
  }
  rep.rows.push_back({"calib-1d", "zf", 8.0, 24, 210, 0.5, INFINITY, 0.9});
  rep.finalize();

  std::ostringstream os;
  write_report_csv(os, rep);
  auto const text = os.str();
  CHECK(text.substr(0, text.find('\n')) == "scenario,method,AF,ACS,sample_id,rlne,psnr_db,ssim,rlne_std,psnr_db_std,ssim_std");
  CHECK(text.find("ALL") != std::string::npos);
  CHECK(text.find("inf") != std::string::npos);

  std::istringstream is(text);
  auto const back = read_report_csv(is);
  REQUIRE(back.rows.size() == rep.rows.size());
  int groups = 0;
  for (auto const &agg : back.rows) {
    if (!agg.aggregate()) {
      continue;
    }
    ++groups;
    std::vector<double> r, p, s;
    for (auto const &row : back.rows) {
      if (!row.aggregate() && row.method == agg.method && row.af == agg.af && row.acs == agg.acs) {
        r.push_back(row.rlne);
        p.push_back(row.psnr);
        s.push_back(row.ssim);
      }
    }
    // recomputed from the serialized per-sample rows, bit for bit
    CHECK(mean_std(r).mean == agg.rlne);
    CHECK(mean_std(r).std == agg.rlne_std);
    CHECK(mean_std(s).mean == agg.ssim);
    CHECK(mean_std(s).std == agg.ssim_std);
    if (std::isinf(agg.psnr)) {
      CHECK(std::isinf(mean_std(p).mean));
    } else {
      CHECK(mean_std(p).mean == agg.psnr);
      CHECK(mean_std(p).std == agg.psnr_std);
    }
  }
  CHECK(groups == 5);
  REQUIRE(back.find("cg-sense", 4.0, 8) != nullptr);
  CHECK(back.find("cg-sense", 4.0, 8)->sample_id == -1);
  CHECK(back.find("pfista", 4.0, 8) == nullptr);
  // sorted: ALL row closes each group
  for (std::size_t i = 0; i + 1 < back.rows.size(); ++i) {
    auto const &a = back.rows[i];
    auto const &b = back.rows[i + 1];
    if (a.method == b.method && a.af == b.af && a.acs == b.acs) {
      CHECK_FALSE(a.aggregate());
    }
  }
  // finalize is idempotent
  auto again = back;
  again.finalize();
  CHECK(again.rows.size() == back.rows.size());
}

TEST_CASE("cohort splits and manifest")
{
  CohortConfig c;
  c.train = 6;
  c.val = 2;
  c.test = 3;
  auto const tr = split_ids(c, Split::train);
  auto const va = split_ids(c, Split::val);
  auto const te = split_ids(c, Split::test);
  std::set<int> all(tr.begin(), tr.end());
  all.insert(va.begin(), va.end());
  all.insert(te.begin(), te.end());
  CHECK(all.size() == 11);
  CHECK(split_ids(c, Split::test) == te);
  for (int id : te) {
    CHECK(split_of(c, id) == Split::test);
  }
  auto const dir = scratch("manifest");
  auto const path = (dir / "manifest.txt").string();
  write_manifest(path, c);
  auto const text = slurp(path);
  CHECK(text.find("train_ids=0,1,2,3,4,5\n") != std::string::npos);
  CHECK(text.find("val_ids=6,7\n") != std::string::npos);
  CHECK(text.find("test_ids=8,9,10\n") != std::string::npos);

  CHECK(effective_acs({false, 4.0, 24}, 64) == 5);
  CHECK(effective_acs({false, 4.0, 4}, 64) == 1);
  CHECK(effective_acs({true, 10.0, 8}, 64) == 8);
  CHECK(effective_acs({false, 4.0, 0}, 64) == 0);
  auto const m1 = sample_mask({false, 4.0, 24}, 64, 64, 1, 3);
  CHECK(m1.omega == sample_mask({false, 4.0, 24}, 64, 64, 1, 3).omega);
  CHECK(m1.omega != sample_mask({false, 4.0, 24}, 64, 64, 1, 4).omega);
}

TEST_CASE("synthetic samples")
{
  auto const spec = random_phantom(32, 32, 5, 2);
  auto const s = synth_sample(spec, 4);
  auto const s2 = synth_sample(spec, 4);
  CHECK(s.full_kspace.data == s2.full_kspace.data);
  CHECK(s.true_maps.max_sos_deviation() < 1e-12);
  for (auto const &v : s.truth.data) {
    CHECK(std::abs(v) <= 1.5);
  }

  // noise-free acquisitions follow the forward model exactly
  auto const mask = make_mask_1d(32, 32, 4.0, 4, 9);
  auto y = s.full_kspace;
  apply_mask(y, mask);
  auto const e = sense_forward(s.true_maps, s.truth, mask);
  CHECK(testing::rel_diff(y.data, e.data) < 1e-10);

  // maps recovered from the fully sampled coils match the true maps
  auto const gt = calib::gt_maps(coil_images(s));
  double worst = 0;
  for (std::size_t i = 0; i < gt.plane_size(); ++i) {
    if (!gt.foreground[i]) {
      continue;
    }
    for (int j = 0; j < 4; ++j) {
      worst = std::max(worst, std::abs(gt.at(j, i) - s.true_maps.at(j, i)));
    }
  }
  CHECK(worst < 1e-10);

  auto const one = synth_sample(spec, 1);
  for (std::size_t i = 0; i < one.true_maps.plane_size(); ++i) {
    CHECK(std::abs(std::abs(one.true_maps.at(0, i)) - 1.0) < 1e-12);
  }

  auto noisy = spec;
  noisy.noise_sigma = 0.01;
  auto const sn = synth_sample(noisy, 4);
  double var = 0;
  for (std::size_t i = 0; i < sn.full_kspace.data.size(); ++i) {
    var += std::norm(sn.full_kspace.data[i] - s.full_kspace.data[i]);
  }
  var /= 2.0 * sn.full_kspace.data.size();
  CHECK(std::sqrt(var) == doctest::Approx(0.01).epsilon(0.05));

  auto bad = spec;
  bad.ellipses.front().intensity = 3.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("scenario definitions")
{
  CHECK(scenario_settings("calib-1d").size() == 4);
  CHECK(scenario_settings("calib-2d").size() == 1);
  CHECK(scenario_settings("calib-2d").front().mask.two_d);
  auto const cl = scenario_settings("calibless");
  REQUIRE(cl.size() == 2);
  CHECK(cl[0].mask.acs == 0);
  CHECK(cl[1].mask.af == 8.0);
  auto const sweep = scenario_settings("acs-sweep");
  REQUIRE(sweep.size() == 4);
  std::set<int> acs;
  for (auto const &s : sweep) {
    acs.insert(s.mask.acs);
    CHECK(s.mask.af == 4.0);
  }
  CHECK(acs == std::set<int>{4, 8, 16, 24});
  CHECK_THROWS_AS(scenario_settings("nope"), UsageError);

  ScenarioConfig cfg;
  cfg.name = "calib-1d";
  cfg.cohort.train = 2;
  cfg.cohort.val = 1;
  cfg.cohort.test = 2;
  cfg.methods = {"zf", "jdsi"};
  CHECK_THROWS_AS(run_scenario(cfg), ScenarioError);
}

TEST_CASE("classical scenario end to end")
{
  ScenarioConfig cfg;
  cfg.name = "calib-1d";
  cfg.cohort.height = 32;
  cfg.cohort.width = 32;
  cfg.cohort.train = 2;
  cfg.cohort.val = 1;
  cfg.cohort.test = 2;
  cfg.methods = {"zf", "cg-sense"};
  auto const dir = scratch("scenario");
  cfg.out_dir = dir.string();
  auto const rep = run_scenario(cfg);
  // 2 methods x 4 settings x (2 samples + ALL)
  CHECK(rep.rows.size() == 24);
  auto const *agg = rep.find("cg-sense", 4.0, 24);
  REQUIRE(agg != nullptr);
  CHECK(agg->rlne >= 0.0);
  CHECK(fs::exists(dir / "calib-1d.csv"));
  CHECK(fs::exists(dir / "calib-1d" / "af4_acs24"));
  auto const csv = read_report_csv((dir / "calib-1d.csv").string());
  CHECK(csv.rows.size() == rep.rows.size());
}

TEST_CASE("scenario ACS filter and per-setting checkpoints")
{
  ScenarioConfig cfg;
  cfg.name = "acs-sweep";
  cfg.cohort.height = 32;
  cfg.cohort.width = 32;
  cfg.cohort.train = 1;
  cfg.cohort.val = 1;
  cfg.cohort.test = 2;
  cfg.methods = {"zf"};
  cfg.acs = {24, 4};
  auto rep = run_scenario(cfg);
  CHECK(rep.rows.size() == 6);
  CHECK(rep.find("zf", 4.0, 24) != nullptr);
  CHECK(rep.find("zf", 4.0, 4) != nullptr);
  CHECK(rep.find("zf", 4.0, 16) == nullptr);
  cfg.acs = {5};
  CHECK_THROWS_AS(run_scenario(cfg), ScenarioError);

  auto const dir = scratch("per_acs");
  auto ncfg = net::JdsiConfig::desk();
  ncfg.height = ncfg.width = 32;
  ncfg.unet_base_filters = 2;
  ncfg.unet_max_filters = 4;
  ncfg.d_layers = ncfg.c_layers = ncfg.s_layers = ncfg.i_layers = 2;
  ncfg.d_filters = ncfg.c_filters = ncfg.s_filters = ncfg.i_filters = 2;
  ncfg.zero_init_residual = false;
  std::vector<int> const acs = {24, 4};
  for (int a : acs) {
    ncfg.seed = static_cast<std::uint64_t>(a);
    net::JdsiNet<float> n(ncfg);
    io::write((dir / ("net_acs" + std::to_string(a) + ".jks")).string(), net::checkpoint_records(n));
  }
  cfg.methods = {"jdsi"};
  cfg.acs = acs;
  cfg.jdsi_checkpoint = (dir / "net_acs{acs}.jks").string();
  rep = run_scenario(cfg);
  // each setting must match a direct reconstruction with its own network
  for (int a : acs) {
    auto net = load_network((dir / ("net_acs" + std::to_string(a) + ".jks")).string());
    auto const s = cohort_sample(cfg.cohort, 2);
    auto const m = sample_mask({false, 4.0, a}, 32, 32, cfg.cohort.seed, 2);
    auto y = s.full_kspace;
    apply_mask(y, m);
    auto const full = coil_images(s);
    auto const x = run_recon(Method::jdsi, MapSource::learned, y, m, &full, net.get(), {}).x;
    double r = -1.0;
    for (auto const &row : rep.rows) {
      if (row.sample_id == 2 && row.acs == a) {
        r = row.rlne;
      }
    }
    CHECK(r == doctest::Approx(rlne(x, s.truth)).epsilon(1e-12));
  }
  cfg.acs = {24, 16};
  CHECK_THROWS(run_scenario(cfg));
}
