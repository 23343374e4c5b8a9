#pragma once

#include "jdsi/container.hpp"
#include "jdsi/mri_model.hpp"
#include "jdsi/nn/complex_ops.hpp"
#include "jdsi/nn/param_store.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace jdsi::net {

struct JdsiConfig
{
  int phases = 5;
  int coils = 4;
  int height = 64;
  int width = 64;
  int unet_base_filters = 32;
  int unet_max_filters = 256;
  int d_layers = 15;
  int d_filters = 64;
  int c_layers = 5;
  int c_filters = 64;
  int s_layers = 5;
  int s_filters = 64;
  int i_layers = 4; // per half of the image module
  int i_filters = 32;
  int epochs = 200;
  double lr = 1e-3;
  double lr_decay = 0.99;
  int batch = 2;
  double alpha1 = 0.1;
  double alpha2 = 0.1;
  std::uint64_t seed = 1;
  double lambda_init = 1e6;
  double gamma_init = 1.0;
  double rho_init = 1e-3;
  /// Gradient step with S^(k) instead of S^(k-1).
  bool image_uses_updated_maps = false;
  /// Skip the map modules and hold externally supplied maps fixed.
  bool frozen_maps = false;
  // start the output layer of every residual branch at zero weights
  bool zero_init_residual = false;
  int threads = 1;

  /// Printed layer counts.
  static JdsiConfig paper();
  /// 64x64, J=4, narrow layers sized for a single CPU core.
  static JdsiConfig desk();

  void validate() const;
  /// Apply one key=value setting; unknown keys raise ConfigError.
  void set(std::string const &key, std::string const &value);
  std::map<std::string, std::string> to_map() const;
  double lr_at(int epoch) const;
};

/// Parse key=value lines ('#' starts a comment). A "preset" key selects
/// paper or desk defaults before the remaining keys are applied.
JdsiConfig parse_config(std::string const &text);
JdsiConfig load_config(std::string const &path);

/// One training or evaluation example, already packed for the network.
template <typename T>
struct Example
{
  nn::Tensor<T> y;         // 1 x 2J x H x W, zero off the mask
  nn::Tensor<T> mask;      // 1 x 1 x H x W
  nn::Tensor<T> ref_coils; // fully sampled coil images
  nn::Tensor<T> ref_maps;  // unit-SoS reference maps, zero off foreground
  nn::Tensor<T> ref_fg;    // 1 x 1 x H x W reference foreground
  nn::Tensor<T> ext_maps;  // maps for the frozen ablation (may be empty)
};

/// Pack raw measurements and references. ext_maps may be null.
template <typename T>
Example<T> make_example(
  CoilStack const &y,
  SamplingMask const &mask,
  CoilStack const &ref_coils,
  SenseMaps const &ref_maps,
  SenseMaps const *ext_maps = nullptr);

template <typename T>
struct Batch
{
  nn::Tensor<T> y, mask, ref_coils, ref_maps, ref_fg, ext_maps;
};

template <typename T>
Batch<T> make_batch(std::vector<Example<T> const *> const &items);

template <typename T>
struct PhaseState
{
  int k = 0;
  nn::Tensor<T> x; // N x 2 x H x W
  nn::Tensor<T> S; // N x 2J x H x W
};

template <typename T>
struct Forward
{
  nn::Var<T> x;
  nn::Var<T> S;
  std::vector<PhaseState<T>> phases; // k = 0..K when requested
};

template <typename T>
class JdsiNet
{
public:
  explicit JdsiNet(JdsiConfig cfg);

  JdsiConfig const &config() const { return cfg_; }
  nn::ParamStore<T> &store() { return store_; }
  nn::ParamStore<T> const &store() const { return store_; }

  /// x_U coils -> (S0, x0).
  std::pair<nn::Var<T>, nn::Var<T>> init_module(nn::Tape<T> &tape, nn::Var<T> const &xu, nn::Mode mode);
  nn::Var<T> sens_module(nn::Tape<T> &tape, nn::Var<T> const &x_prev, nn::Var<T> const &s_prev, int k, nn::Mode mode);
  nn::Var<T> image_module(
    nn::Tape<T> &tape,
    nn::Var<T> const &x_prev,
    nn::Var<T> const &s_used,
    nn::Var<T> const &y,
    nn::Tensor<T> const &mask,
    int k,
    nn::Mode mode);
  nn::Var<T> data_consistency(
    nn::Tape<T> &tape, nn::Var<T> const &x_tilde, nn::Var<T> const &s, nn::Tensor<T> const &y, nn::Tensor<T> const &mask);

  Forward<T> forward(nn::Tape<T> &tape, Batch<T> const &b, nn::Mode mode, bool keep_phases = false);
  nn::Var<T> loss(nn::Tape<T> &tape, Forward<T> const &f, Batch<T> const &b);

  /// Reconstruct one example in eval mode without recording.
  std::pair<ComplexImage, SenseMaps> reconstruct(Example<T> const &e, std::vector<PhaseState<T>> *phases = nullptr);

private:
  nn::Var<T> conv_stack(
    nn::Tape<T> &tape, std::string const &name, std::string const &bn_prefix, nn::Var<T> x, int layers, nn::Mode mode);
  nn::Var<T> cbr(
    nn::Tape<T> &tape, std::string const &conv, std::string const &bn, nn::Var<T> const &x, nn::Mode mode);
  nn::Var<T> unet(nn::Tape<T> &tape, nn::Var<T> const &x, nn::Mode mode);

  void add_conv(std::string const &name, int cin, int cout, bool bias, bool residual_out = false);
  void add_bn(std::string const &name, int channels);
  void build_stack(
    std::string const &name, std::vector<std::string> const &bn_prefixes, int layers, int cin, int filters, int cout,
    bool residual = true);

  JdsiConfig cfg_;
  nn::ParamStore<T> store_;
  Rng rng_;
};

/// Parameters, Adam state and batch-norm statistics as container records.
template <typename T>
std::vector<io::Record> checkpoint_records(JdsiNet<T> const &net);
/// Restore a checkpoint; every parameter and buffer must be present with
/// the same shape.
template <typename T>
void load_checkpoint(JdsiNet<T> &net, std::vector<io::Record> const &records);

/// Network configuration stored in a checkpoint.
JdsiConfig checkpoint_config(std::vector<io::Record> const &records);

struct EpochRecord
{
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_rlne = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double seconds = 0.0;
};

struct TrainOptions
{
  std::string checkpoint_path; // written after every epoch when non-empty
  std::function<void(EpochRecord const &)> on_epoch;
  /// Stop after this many optimizer steps (0 = full schedule).
  long max_steps = 0;
};

struct TrainResult
{
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string reason;
  long steps = 0;
};

/// Adam over all trainable parameters with seeded per-epoch shuffling.
/// A non-finite loss stops training and restores the last completed epoch.
template <typename T>
TrainResult train(
  JdsiNet<T> &net,
  std::vector<Example<T>> const &train_set,
  std::vector<Example<T>> const &val_set,
  TrainOptions const &opts = {});

/// Mean loss and magnitude metrics of the eval-mode network on a set.
template <typename T>
EpochRecord evaluate(JdsiNet<T> &net, std::vector<Example<T>> const &set);

void write_history_csv(std::string const &path, std::vector<EpochRecord> const &history);

} // namespace jdsi::net
