#include "jdsi/jdsi_net.hpp"

#include "jdsi/error.hpp"
#include "jdsi/metrics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace jdsi::net {

using namespace jdsi::nn;

// ---------------------------------------------------------------- config

JdsiConfig JdsiConfig::paper() { return JdsiConfig{}; }

JdsiConfig JdsiConfig::desk()
{
  JdsiConfig c;
  c.coils = 4;
  c.height = 64;
  c.width = 64;
  c.unet_base_filters = 8;
  c.unet_max_filters = 64;
  c.d_layers = 7;
  c.d_filters = 8;
  c.c_filters = 8;
  c.s_filters = 8;
  c.i_filters = 8;
  c.epochs = 30;
  c.zero_init_residual = true;
  return c;
}

void JdsiConfig::validate() const
{
  auto positive = [](int v, char const *what) {
    if (v < 1) {
      throw ConfigError(std::string(what) + " must be >= 1");
    }
  };
  positive(phases, "phases");
  positive(coils, "coils");
  positive(unet_base_filters, "unet_base_filters");
  positive(unet_max_filters, "unet_max_filters");
  positive(d_layers, "d_layers");
  positive(d_filters, "d_filters");
  positive(c_layers, "c_layers");
  positive(c_filters, "c_filters");
  positive(s_layers, "s_layers");
  positive(s_filters, "s_filters");
  positive(i_layers, "i_layers");
  positive(i_filters, "i_filters");
  positive(batch, "batch");
  positive(threads, "threads");
  if (epochs < 0) {
    throw ConfigError("epochs must be >= 0");
  }
  if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError(
      "image dims " + std::to_string(height) + "x" + std::to_string(width) + " must be positive multiples of 16");
  }
  if (!(lr > 0.0) || !(lr_decay > 0.0) || !(alpha1 >= 0.0) || !(alpha2 >= 0.0)) {
    throw ConfigError("lr and lr_decay must be > 0, alpha1 and alpha2 >= 0");
  }
  if (!(lambda_init >= 0.0) || !(rho_init >= 0.0) || !std::isfinite(gamma_init)) {
    throw ConfigError("lambda_init and rho_init must be >= 0, gamma_init finite");
  }
}

namespace {

int to_int(std::string const &k, std::string const &v)
{
  try {
    std::size_t pos = 0;
    int const r = std::stoi(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument(v);
    }
    return r;
  } catch (std::logic_error const &) {
    throw ConfigError("config key '" + k + "' expects an integer, got '" + v + "'");
  }
}

double to_double(std::string const &k, std::string const &v)
{
  try {
    std::size_t pos = 0;
    double const r = std::stod(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument(v);
    }
    return r;
  } catch (std::logic_error const &) {
    throw ConfigError("config key '" + k + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(std::string const &k, std::string const &v)
{
  if (v == "1" || v == "true" || v == "yes" || v == "on") {
    return true;
  }
  if (v == "0" || v == "false" || v == "no" || v == "off") {
    return false;
  }
  throw ConfigError("config key '" + k + "' expects a boolean, got '" + v + "'");
}

std::string trim(std::string s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  auto const e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

void JdsiConfig::set(std::string const &key, std::string const &value)
{
  std::map<std::string, int *> const ints = {
    {"phases", &phases},
    {"coils", &coils},
    {"height", &height},
    {"width", &width},
    {"unet_base_filters", &unet_base_filters},
    {"unet_max_filters", &unet_max_filters},
    {"d_layers", &d_layers},
    {"d_filters", &d_filters},
    {"c_layers", &c_layers},
    {"c_filters", &c_filters},
    {"s_layers", &s_layers},
    {"s_filters", &s_filters},
    {"i_layers", &i_layers},
    {"i_filters", &i_filters},
    {"epochs", &epochs},
    {"batch", &batch},
    {"threads", &threads},
  };
  std::map<std::string, double *> const reals = {
    {"lr", &lr},
    {"lr_decay", &lr_decay},
    {"alpha1", &alpha1},
    {"alpha2", &alpha2},
    {"lambda_init", &lambda_init},
    {"gamma_init", &gamma_init},
    {"rho_init", &rho_init},
  };
  if (auto it = ints.find(key); it != ints.end()) {
    *it->second = to_int(key, value);
  } else if (auto jt = reals.find(key); jt != reals.end()) {
    *jt->second = to_double(key, value);
  } else if (key == "seed") {
    try {
      seed = std::stoull(value);
    } catch (std::logic_error const &) {
      throw ConfigError("config key 'seed' expects an unsigned integer, got '" + value + "'");
    }
  } else if (key == "image_uses_updated_maps") {
    image_uses_updated_maps = to_bool(key, value);
  } else if (key == "frozen_maps") {
    frozen_maps = to_bool(key, value);
  } else if (key == "zero_init_residual") {
    zero_init_residual = to_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::map<std::string, std::string> JdsiConfig::to_map() const
{
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  return {
    {"phases", std::to_string(phases)},
    {"coils", std::to_string(coils)},
    {"height", std::to_string(height)},
    {"width", std::to_string(width)},
    {"unet_base_filters", std::to_string(unet_base_filters)},
    {"unet_max_filters", std::to_string(unet_max_filters)},
    {"d_layers", std::to_string(d_layers)},
    {"d_filters", std::to_string(d_filters)},
    {"c_layers", std::to_string(c_layers)},
    {"c_filters", std::to_string(c_filters)},
    {"s_layers", std::to_string(s_layers)},
    {"s_filters", std::to_string(s_filters)},
    {"i_layers", std::to_string(i_layers)},
    {"i_filters", std::to_string(i_filters)},
    {"epochs", std::to_string(epochs)},
    {"batch", std::to_string(batch)},
    {"threads", std::to_string(threads)},
    {"lr", num(lr)},
    {"lr_decay", num(lr_decay)},
    {"alpha1", num(alpha1)},
    {"alpha2", num(alpha2)},
    {"lambda_init", num(lambda_init)},
    {"gamma_init", num(gamma_init)},
    {"rho_init", num(rho_init)},
    {"seed", std::to_string(seed)},
    {"image_uses_updated_maps", image_uses_updated_maps ? "true" : "false"},
    {"frozen_maps", frozen_maps ? "true" : "false"},
    {"zero_init_residual", zero_init_residual ? "true" : "false"},
  };
}

double JdsiConfig::lr_at(int epoch) const { return lr * std::pow(lr_decay, epoch); }

JdsiConfig parse_config(std::string const &text)
{
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) {
      continue;
    }
    auto const eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  JdsiConfig cfg = JdsiConfig::desk();
  for (auto const &[k, v] : kv) {
    if (k == "preset") {
      if (v == "paper") {
        cfg = JdsiConfig::paper();
      } else if (v == "desk") {
        cfg = JdsiConfig::desk();
      } else {
        throw ConfigError("unknown preset '" + v + "'");
      }
    }
  }
  for (auto const &[k, v] : kv) {
    if (k != "preset") {
      cfg.set(k, v);
    }
  }
  cfg.validate();
  return cfg;
}

JdsiConfig load_config(std::string const &path)
{
  std::ifstream f(path);
  if (!f) {
    throw ConfigError("cannot read config file " + path);
  }
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------- examples

template <typename T>
Example<T> make_example(
  CoilStack const &y,
  SamplingMask const &mask,
  CoilStack const &ref_coils,
  SenseMaps const &ref_maps,
  SenseMaps const *ext_maps)
{
  if (y.height != mask.height || y.width != mask.width || ref_coils.coils != y.coils ||
      ref_maps.coils != y.coils || ref_coils.height != y.height || ref_maps.height != y.height ||
      ref_coils.width != y.width || ref_maps.width != y.width) {
    throw ShapeError("example inputs disagree in shape");
  }
  Example<T> e;
  CoilStack ym = y;
  apply_mask(ym, mask);
  e.y = pack<T>(ym);
  e.mask = pack<T>(mask);
  e.ref_coils = pack<T>(ref_coils);
  e.ref_maps = pack<T>(ref_maps);
  e.ref_fg = pack_foreground<T>(ref_maps);
  if (ext_maps) {
    if (ext_maps->coils != y.coils || ext_maps->height != y.height || ext_maps->width != y.width) {
      throw ShapeError("external maps disagree in shape");
    }
    e.ext_maps = pack<T>(*ext_maps);
  }
  return e;
}

template <typename T>
Batch<T> make_batch(std::vector<Example<T> const *> const &items)
{
  auto gather = [&](auto member) {
    std::vector<Tensor<T>> v;
    v.reserve(items.size());
    for (auto const *e : items) {
      v.push_back(e->*member);
    }
    return batch(v);
  };
  Batch<T> b;
  b.y = gather(&Example<T>::y);
  b.mask = gather(&Example<T>::mask);
  b.ref_coils = gather(&Example<T>::ref_coils);
  b.ref_maps = gather(&Example<T>::ref_maps);
  b.ref_fg = gather(&Example<T>::ref_fg);
  bool const has_ext = !items.front()->ext_maps.data.empty();
  for (auto const *e : items) {
    if (e->ext_maps.data.empty() == has_ext) {
      throw ShapeError("batch mixes examples with and without external maps");
    }
  }
  if (has_ext) {
    b.ext_maps = gather(&Example<T>::ext_maps);
  }
  return b;
}

// ---------------------------------------------------------------- network

namespace {

std::string phase_tag(std::string const &name, int k) { return name + ".p" + std::to_string(k); }

} // namespace

template <typename T>
JdsiNet<T>::JdsiNet(JdsiConfig cfg)
  : cfg_(std::move(cfg))
  , rng_(cfg_.seed, "jdsi-weights")
{
  cfg_.validate();
  keep_heap_warm();
  int const cj = 2 * cfg_.coils;
  if (!cfg_.frozen_maps) {
    // U-Net E
    std::vector<int> ch;
    for (int l = 0; l <= 4; ++l) {
      ch.push_back(std::min(cfg_.unet_base_filters << l, cfg_.unet_max_filters));
    }
    int cin = cj;
    for (int l = 0; l < 4; ++l) {
      std::string const p = "E.enc" + std::to_string(l);
      add_conv(p + ".0", cin, ch[l], false);
      add_bn(p + ".0", ch[l]);
      add_conv(p + ".1", ch[l], ch[l], false);
      add_bn(p + ".1", ch[l]);
      cin = ch[l];
    }
    add_conv("E.bott.0", cin, ch[4], false);
    add_bn("E.bott.0", ch[4]);
    add_conv("E.bott.1", ch[4], ch[4], false);
    add_bn("E.bott.1", ch[4]);
    int below = ch[4];
    for (int l = 3; l >= 0; --l) {
      std::string const p = "E.dec" + std::to_string(l);
      add_conv(p + ".0", below + ch[l], ch[l], false);
      add_bn(p + ".0", ch[l]);
      add_conv(p + ".1", ch[l], ch[l], false);
      add_bn(p + ".1", ch[l]);
      below = ch[l];
    }
    add_conv("E.out", ch[0], cj, true, true);

    build_stack("D", {"D"}, cfg_.d_layers, cj, cfg_.d_filters, cj);
    build_stack("C", {"C"}, cfg_.c_layers, 2 * cj, cfg_.c_filters, cj);
    std::vector<std::string> sp;
    for (int k = 1; k <= cfg_.phases; ++k) {
      sp.push_back(phase_tag("S", k));
    }
    build_stack("S", sp, cfg_.s_layers, 2 * cj, cfg_.s_filters, cj);
  }
  std::vector<std::string> ia, ib;
  for (int k = 1; k <= cfg_.phases; ++k) {
    ia.push_back(phase_tag("Ia", k));
    ib.push_back(phase_tag("Ib", k));
  }
  build_stack("Ia", ia, cfg_.i_layers, 2, cfg_.i_filters, cfg_.i_filters, false);
  build_stack("Ib", ib, cfg_.i_layers, cfg_.i_filters, cfg_.i_filters, 2);

  store_.add("gamma", Tensor<T>({1, 1, 1, 1}, static_cast<T>(cfg_.gamma_init)));
  for (int k = 1; k <= cfg_.phases; ++k) {
    store_.add("rho." + std::to_string(k), Tensor<T>({1, 1, 1, 1}, static_cast<T>(cfg_.rho_init)), true, T(0));
  }
  store_.add("lambda", Tensor<T>({1, 1, 1, 1}, static_cast<T>(cfg_.lambda_init)), true, T(0));
}

template <typename T>
void JdsiNet<T>::add_conv(std::string const &name, int cin, int cout, bool bias, bool residual_out)
{
  auto w = xavier_init<T>(Shape{cout, cin, 3, 3}, rng_.split(name));
  if (residual_out && cfg_.zero_init_residual) {
    std::fill(w.data.begin(), w.data.end(), T(0));
  }
  store_.add(name + ".w", std::move(w));
  if (bias) {
    store_.add(name + ".b", Tensor<T>({1, cout, 1, 1}));
  }
}

template <typename T>
void JdsiNet<T>::add_bn(std::string const &name, int channels)
{
  store_.add(name + ".bn.scale", Tensor<T>({1, channels, 1, 1}, T(1)));
  store_.add(name + ".bn.shift", Tensor<T>({1, channels, 1, 1}, T(0)));
  store_.add_buffer(name + ".bn.mean", Tensor<T>({1, channels, 1, 1}, T(0)));
  store_.add_buffer(name + ".bn.var", Tensor<T>({1, channels, 1, 1}, T(1)));
}

template <typename T>
void JdsiNet<T>::build_stack(
  std::string const &name, std::vector<std::string> const &bn_prefixes, int layers, int cin, int filters, int cout,
  bool residual)
{
  for (int i = 0; i < layers; ++i) {
    bool const last = i == layers - 1;
    int const in = i == 0 ? cin : filters;
    int const out = last ? cout : filters;
    std::string const conv = name + "." + std::to_string(i);
    add_conv(conv, in, out, last, last && residual);
    if (!last) {
      for (auto const &bp : bn_prefixes) {
        add_bn(bp + "." + std::to_string(i), out);
      }
    }
  }
}

template <typename T>
Var<T> JdsiNet<T>::cbr(Tape<T> &tape, std::string const &conv, std::string const &bn, Var<T> const &x, Mode mode)
{
  auto h = conv3x3<T>(tape, x, store_.get(conv + ".w"), nullptr);
  h = batchnorm<T>(
    tape,
    h,
    store_.get(bn + ".bn.scale"),
    store_.get(bn + ".bn.shift"),
    store_.buffer(bn + ".bn.mean"),
    store_.buffer(bn + ".bn.var"),
    mode);
  return relu<T>(tape, h);
}

template <typename T>
Var<T> JdsiNet<T>::conv_stack(
  Tape<T> &tape, std::string const &name, std::string const &bn_prefix, Var<T> x, int layers, Mode mode)
{
  for (int i = 0; i < layers - 1; ++i) {
    std::string const idx = "." + std::to_string(i);
    x = cbr(tape, name + idx, bn_prefix + idx, x, mode);
  }
  std::string const last = name + "." + std::to_string(layers - 1);
  return conv3x3<T>(tape, x, store_.get(last + ".w"), store_.get(last + ".b"));
}

template <typename T>
Var<T> JdsiNet<T>::unet(Tape<T> &tape, Var<T> const &x, Mode mode)
{
  std::vector<Var<T>> skips;
  Var<T> h = x;
  for (int l = 0; l < 4; ++l) {
    std::string const p = "E.enc" + std::to_string(l);
    h = cbr(tape, p + ".0", p + ".0", h, mode);
    h = cbr(tape, p + ".1", p + ".1", h, mode);
    skips.push_back(h);
    h = maxpool2<T>(tape, h);
  }
  h = cbr(tape, "E.bott.0", "E.bott.0", h, mode);
  h = cbr(tape, "E.bott.1", "E.bott.1", h, mode);
  for (int l = 3; l >= 0; --l) {
    std::string const p = "E.dec" + std::to_string(l);
    h = concat_channels<T>(tape, upsample2<T>(tape, h), skips[l]);
    h = cbr(tape, p + ".0", p + ".0", h, mode);
    h = cbr(tape, p + ".1", p + ".1", h, mode);
  }
  return conv3x3<T>(tape, h, store_.get("E.out.w"), store_.get("E.out.b"));
}

template <typename T>
std::pair<Var<T>, Var<T>> JdsiNet<T>::init_module(Tape<T> &tape, Var<T> const &xu, Mode mode)
{
  if (cfg_.frozen_maps) {
    throw UsageError("init_module is not available in the frozen-maps configuration");
  }
  auto const s = xu->shape();
  if (s.c != 2 * cfg_.coils || s.h % 16 != 0 || s.w % 16 != 0) {
    throw ConfigError("init_module input " + s.str() + " needs 2J channels and dims divisible by 16");
  }
  auto const e = add<T>(tape, xu, unet(tape, xu, mode));
  auto const s_e = sos_normalize<T>(tape, e);
  auto const s_d = add<T>(tape, s_e, conv_stack(tape, "D", "D", s_e, cfg_.d_layers, mode));
  auto const fused = concat_channels<T>(tape, s_d, xu);
  auto const s0 = sos_normalize<T>(tape, add<T>(tape, s_d, conv_stack(tape, "C", "C", fused, cfg_.c_layers, mode)));
  auto const x0 = combine<T>(tape, s0, xu);
  return {s0, x0};
}

template <typename T>
Var<T> JdsiNet<T>::sens_module(Tape<T> &tape, Var<T> const &x_prev, Var<T> const &s_prev, int k, Mode mode)
{
  auto const fused = concat_channels<T>(tape, s_prev, cmul_coils<T>(tape, s_prev, x_prev));
  auto const r = conv_stack(tape, "S", phase_tag("S", k), fused, cfg_.s_layers, mode);
  return sos_normalize<T>(tape, add<T>(tape, s_prev, r));
}

template <typename T>
Var<T> JdsiNet<T>::image_module(
  Tape<T> &tape,
  Var<T> const &x_prev,
  Var<T> const &s_used,
  Var<T> const &y,
  Tensor<T> const &mask,
  int k,
  Mode mode)
{
  auto const kx = mask_mul<T>(tape, fft2c<T>(tape, cmul_coils<T>(tape, s_used, x_prev)), mask);
  auto const grad = combine<T>(tape, s_used, ifft2c<T>(tape, sub<T>(tape, kx, y)));
  auto const g = sub<T>(tape, x_prev, scale<T>(tape, grad, store_.get("gamma")));
  auto a = conv_stack(tape, "Ia", phase_tag("Ia", k), g, cfg_.i_layers, mode);
  a = softthresh<T>(tape, a, store_.get("rho." + std::to_string(k)));
  auto const b = conv_stack(tape, "Ib", phase_tag("Ib", k), a, cfg_.i_layers, mode);
  return add<T>(tape, g, b);
}

template <typename T>
Var<T> JdsiNet<T>::data_consistency(
  Tape<T> &tape, Var<T> const &x_tilde, Var<T> const &s, Tensor<T> const &y, Tensor<T> const &mask)
{
  auto const k = fft2c<T>(tape, cmul_coils<T>(tape, s, x_tilde));
  auto const blended = dc_blend<T>(tape, k, y, mask, store_.get("lambda"));
  return combine<T>(tape, s, ifft2c<T>(tape, blended));
}

template <typename T>
Forward<T> JdsiNet<T>::forward(Tape<T> &tape, Batch<T> const &b, Mode mode, bool keep_phases)
{
  auto const ys = b.y.shape;
  if (ys.c != 2 * cfg_.coils || ys.h != cfg_.height || ys.w != cfg_.width) {
    throw ShapeError("network configured for " + std::to_string(cfg_.coils) + " coils at " +
                     std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + ", got " + ys.str());
  }
  auto const y = constant(b.y);
  auto const xu = ifft2c<T>(tape, y);
  Forward<T> f;
  Var<T> S, x;
  if (cfg_.frozen_maps) {
    if (b.ext_maps.data.empty()) {
      throw UsageError("frozen-maps network needs external maps");
    }
    S = constant(b.ext_maps);
    x = combine<T>(tape, S, xu);
  } else {
    std::tie(S, x) = init_module(tape, xu, mode);
  }
  if (keep_phases) {
    f.phases.push_back({0, x->value, S->value});
  }
  for (int k = 1; k <= cfg_.phases; ++k) {
    auto const s_next = cfg_.frozen_maps ? S : sens_module(tape, x, S, k, mode);
    auto const &s_used = cfg_.image_uses_updated_maps ? s_next : S;
    auto const xt = image_module(tape, x, s_used, y, b.mask, k, mode);
    x = data_consistency(tape, xt, s_next, b.y, b.mask);
    S = s_next;
    if (keep_phases) {
      f.phases.push_back({k, x->value, S->value});
    }
  }
  f.x = x;
  f.S = S;
  return f;
}

template <typename T>
Var<T> JdsiNet<T>::loss(Tape<T> &tape, Forward<T> const &f, Batch<T> const &b)
{
  if (f.S->shape() != b.ref_maps.shape || f.S->shape() != b.ref_coils.shape ||
      f.x->shape() != Shape{b.ref_coils.shape.n, 2, b.ref_coils.shape.h, b.ref_coils.shape.w}) {
    throw ShapeError("loss: prediction and reference shapes differ");
  }
  Tape<T> scratch(false);
  auto const ref_coils = constant(b.ref_coils);
  auto const ref_maps = constant(b.ref_maps);
  auto const ref_image = constant(combine<T>(scratch, ref_maps, ref_coils)->value);
  auto const l_coil = sum_sq<T>(tape, sub<T>(tape, ref_coils, cmul_coils<T>(tape, f.S, f.x)));
  auto const l_comb = sum_sq<T>(tape, sub<T>(tape, ref_image, f.x));
  auto const l_sens = sum_sq<T>(tape, sub<T>(tape, ref_maps, f.S), &b.ref_fg);
  auto total = add<T>(
    tape,
    l_coil,
    add<T>(tape, mul_const<T>(tape, l_comb, static_cast<T>(cfg_.alpha1)), mul_const<T>(tape, l_sens, static_cast<T>(cfg_.alpha2))));
  return mul_const<T>(tape, total, static_cast<T>(1.0 / b.y.shape.n));
}

template <typename T>
std::pair<ComplexImage, SenseMaps> JdsiNet<T>::reconstruct(Example<T> const &e, std::vector<PhaseState<T>> *phases)
{
  Tape<T> tape(false);
  auto const b = make_batch<T>({&e});
  auto const f = forward(tape, b, Mode::eval, phases != nullptr);
  if (phases) {
    *phases = f.phases;
  }
  return {unpack_image(f.x->value), unpack_maps(f.S->value)};
}

// ---------------------------------------------------------------- checkpoints

namespace {

template <typename T>
io::Record real_record(std::vector<T> const &v, Shape s, std::string const &name, io::RecordKind kind)
{
  std::array<std::uint32_t, 4> const dims{
    static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
    static_cast<std::uint32_t>(s.w)};
  return io::to_record(v, dims, name, kind);
}

template <typename T>
void assign(std::vector<T> &dst, io::Record const &r, Shape s)
{
  if (r.dims[0] != static_cast<std::uint32_t>(s.n) || r.dims[1] != static_cast<std::uint32_t>(s.c) ||
      r.dims[2] != static_cast<std::uint32_t>(s.h) || r.dims[3] != static_cast<std::uint32_t>(s.w)) {
    throw ShapeError("checkpoint record '" + r.name + "' has the wrong shape");
  }
  auto const v = io::to_reals(r);
  dst.assign(v.size(), T(0));
  for (std::size_t i = 0; i < v.size(); ++i) {
    dst[i] = static_cast<T>(v[i]);
  }
}

} // namespace

template <typename T>
std::vector<io::Record> checkpoint_records(JdsiNet<T> const &net)
{
  std::vector<io::Record> out;
  std::string text;
  for (auto const &[k, v] : net.config().to_map()) {
    text += k + "=" + v + "\n";
  }
  io::Record meta;
  meta.kind = io::RecordKind::param;
  meta.name = "meta/config";
  meta.dims = {1, 1, 1, static_cast<std::uint32_t>(text.size())};
  meta.dtype = io::DType::u8;
  meta.payload.assign(text.begin(), text.end());
  out.push_back(std::move(meta));
  for (auto const &p : net.store().params()) {
    auto const s = p.var->value.shape;
    out.push_back(real_record(p.var->value.data, s, p.name, io::RecordKind::param));
    out.push_back(real_record(p.m, s, p.name + "/m", io::RecordKind::adam_state));
    out.push_back(real_record(p.v, s, p.name + "/v", io::RecordKind::adam_state));
    out.push_back(io::to_record(std::vector<double>{static_cast<double>(p.t)}, {1, 1, 1, 1}, p.name + "/t",
                                io::RecordKind::adam_state));
  }
  for (auto const &[name, t] : net.store().buffers()) {
    out.push_back(real_record(t.data, t.shape, name, io::RecordKind::param));
  }
  return out;
}

template <typename T>
void load_checkpoint(JdsiNet<T> &net, std::vector<io::Record> const &records)
{
  std::map<std::string, io::Record const *> by_name;
  for (auto const &r : records) {
    by_name[r.name] = &r;
  }
  auto need = [&](std::string const &n) -> io::Record const & {
    auto it = by_name.find(n);
    if (it == by_name.end()) {
      throw InvalidInput("checkpoint lacks record '" + n + "'");
    }
    return *it->second;
  };
  for (auto &p : net.store().params()) {
    auto const s = p.var->value.shape;
    assign(p.var->value.data, need(p.name), s);
    assign(p.m, need(p.name + "/m"), s);
    assign(p.v, need(p.name + "/v"), s);
    p.t = static_cast<std::int64_t>(io::to_reals(need(p.name + "/t")).at(0));
  }
  for (auto &[name, t] : net.store().buffers()) {
    assign(t.data, need(name), t.shape);
  }
}

// ---------------------------------------------------------------- training

template <typename T>
EpochRecord evaluate(JdsiNet<T> &net, std::vector<Example<T>> const &set)
{
  EpochRecord r;
  if (set.empty()) {
    return r;
  }
  std::vector<double> rl, ps, ss;
  double loss = 0.0;
  for (auto const &e : set) {
    Tape<T> tape(false);
    auto const b = make_batch<T>({&e});
    auto const f = net.forward(tape, b, Mode::eval);
    loss += static_cast<double>(net.loss(tape, f, b)->value.data[0]);
    Tape<T> scratch(false);
    auto const ref = unpack_image(combine<T>(scratch, constant(b.ref_maps), constant(b.ref_coils))->value);
    auto const x = unpack_image(f.x->value);
    rl.push_back(rlne(x, ref));
    ps.push_back(psnr(x, ref));
    ss.push_back(ssim(x, ref));
  }
  r.val_loss = loss / static_cast<double>(set.size());
  r.val_rlne = mean_std(rl).mean;
  r.val_psnr = mean_std(ps).mean;
  r.val_ssim = mean_std(ss).mean;
  return r;
}

template <typename T>
TrainResult train(
  JdsiNet<T> &net, std::vector<Example<T>> const &train_set, std::vector<Example<T>> const &val_set, TrainOptions const &opts)
{
  auto const &cfg = net.config();
  if (train_set.empty()) {
    throw InvalidInput("training set is empty");
  }
  set_num_threads(cfg.threads);
  TrainResult res;
  auto good = checkpoint_records(net);
  Rng const shuffle_root(cfg.seed, "jdsi-shuffle");
  std::size_t const n = train_set.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto const t0 = std::chrono::steady_clock::now();
    double const lr = cfg.lr_at(epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng r = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[r.below(i + 1)]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
      std::vector<Example<T> const *> items;
      for (std::size_t i = start; i < std::min(n, start + static_cast<std::size_t>(cfg.batch)); ++i) {
        items.push_back(&train_set[order[i]]);
      }
      auto const b = make_batch<T>(items);
      Tape<T> tape;
      net.store().zero_grad();
      auto const f = net.forward(tape, b, Mode::train);
      auto const l = net.loss(tape, f, b);
      double const lv = l->value.data[0];
      if (!std::isfinite(lv)) {
        load_checkpoint(net, good);
        res.aborted = true;
        res.reason = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches);
        return res;
      }
      tape.backward(l);
      adam_step(net.store(), lr);
      loss_sum += lv;
      ++batches;
      ++res.steps;
      if (opts.max_steps > 0 && res.steps >= opts.max_steps) {
        break;
      }
    }
    EpochRecord rec = evaluate(net, val_set);
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.train_loss)) {
      load_checkpoint(net, good);
      res.aborted = true;
      res.reason = "non-finite loss at epoch " + std::to_string(epoch);
      return res;
    }
    good = checkpoint_records(net);
    if (!opts.checkpoint_path.empty()) {
      io::write(opts.checkpoint_path, good);
    }
    res.history.push_back(rec);
    if (opts.on_epoch) {
      opts.on_epoch(rec);
    }
    if (opts.max_steps > 0 && res.steps >= opts.max_steps) {
      break;
    }
  }
  return res;
}

JdsiConfig checkpoint_config(std::vector<io::Record> const &records)
{
  auto const &r = io::find(records, "meta/config");
  return parse_config(std::string(r.payload.begin(), r.payload.end()));
}

void write_history_csv(std::string const &path, std::vector<EpochRecord> const &history)
{
  std::ofstream f(path);
  if (!f) {
    throw InvalidInput("cannot write " + path);
  }
  f.precision(10);
  f << "epoch,lr,train_loss,val_loss,val_rlne,val_psnr_db,val_ssim,seconds\n";
  for (auto const &r : history) {
    f << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_rlne << ','
      << r.val_psnr << ',' << r.val_ssim << ',' << r.seconds << '\n';
  }
}

#define JDSI_INSTANTIATE(T)                                                                                       \
  template Example<T> make_example<T>(                                                                            \
    CoilStack const &, SamplingMask const &, CoilStack const &, SenseMaps const &, SenseMaps const *);             \
  template Batch<T> make_batch<T>(std::vector<Example<T> const *> const &);                                       \
  template class JdsiNet<T>;                                                                                      \
  template std::vector<io::Record> checkpoint_records<T>(JdsiNet<T> const &);                                     \
  template void load_checkpoint<T>(JdsiNet<T> &, std::vector<io::Record> const &);                                \
  template EpochRecord evaluate<T>(JdsiNet<T> &, std::vector<Example<T>> const &);                                \
  template TrainResult train<T>(JdsiNet<T> &, std::vector<Example<T>> const &, std::vector<Example<T>> const &, \
                                TrainOptions const &);

JDSI_INSTANTIATE(float)
JDSI_INSTANTIATE(double)

} // namespace jdsi::net
