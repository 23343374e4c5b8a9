#pragma once

#include "jdsi/nn/autograd.hpp"
#include "jdsi/rng.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>

namespace jdsi::nn {

template <typename T>
struct Param
{
  std::string name;
  Var<T> var;
  bool trainable = true;
  std::optional<T> min_value; // projected after every update
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t t = 0;
};

/// Named parameters in insertion order plus non-trainable buffers
/// (batch-norm running statistics). Single writer.
template <typename T>
class ParamStore
{
public:
  Var<T> add(std::string const &name, Tensor<T> value, bool trainable = true, std::optional<T> min_value = {})
  {
    if (index_.count(name)) {
      throw ConfigError("duplicate parameter name: " + name);
    }
    Param<T> p;
    p.name = name;
    p.var = leaf(std::move(value), trainable);
    p.trainable = trainable;
    p.min_value = min_value;
    p.m.assign(p.var->value.size(), T(0));
    p.v.assign(p.var->value.size(), T(0));
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back().var;
  }

  Tensor<T> &add_buffer(std::string const &name, Tensor<T> value)
  {
    auto [it, inserted] = buffers_.emplace(name, std::move(value));
    if (!inserted) {
      throw ConfigError("duplicate buffer name: " + name);
    }
    return it->second;
  }

  bool has(std::string const &name) const { return index_.count(name) != 0; }
  Param<T> &param(std::string const &name)
  {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw ConfigError("unknown parameter: " + name);
    }
    return params_[it->second];
  }
  Param<T> const &param(std::string const &name) const { return const_cast<ParamStore *>(this)->param(name); }
  Var<T> const &get(std::string const &name) const { return param(name).var; }

  Tensor<T> &buffer(std::string const &name)
  {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) {
      throw ConfigError("unknown buffer: " + name);
    }
    return it->second;
  }

  std::vector<Param<T>> &params() { return params_; }
  std::vector<Param<T>> const &params() const { return params_; }
  std::map<std::string, Tensor<T>> &buffers() { return buffers_; }
  std::map<std::string, Tensor<T>> const &buffers() const { return buffers_; }

  /// Freeze or unfreeze a parameter; frozen parameters get no gradient.
  void set_trainable(std::string const &name, bool trainable)
  {
    auto &p = param(name);
    p.trainable = trainable;
    p.var->requires_grad = trainable;
  }

  void zero_grad()
  {
    for (auto &p : params_) {
      p.var->grad.clear();
    }
  }

  std::size_t count() const
  {
    std::size_t n = 0;
    for (auto const &p : params_) {
      n += p.var->value.size();
    }
    return n;
  }

  /// Apply lower bounds (rho >= 0, lambda >= 0).
  void project()
  {
    for (auto &p : params_) {
      if (p.min_value) {
        for (auto &x : p.var->value.data) {
          x = std::max(x, *p.min_value);
        }
      }
    }
  }

private:
  std::vector<Param<T>> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, Tensor<T>> buffers_;
};

/// Adam with bias correction. Parameters without a gradient buffer are
/// treated as having zero gradient.
template <typename T>
void adam_step(ParamStore<T> &store, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
{
  for (auto &p : store.params()) {
    if (!p.trainable) {
      continue;
    }
    auto &val = p.var->value.data;
    auto const &g = p.var->grad;
    p.t += 1;
    double const c1 = 1.0 - std::pow(beta1, static_cast<double>(p.t));
    double const c2 = 1.0 - std::pow(beta2, static_cast<double>(p.t));
    for (std::size_t i = 0; i < val.size(); ++i) {
      double const gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      double const m = beta1 * p.m[i] + (1.0 - beta1) * gi;
      double const v = beta2 * p.v[i] + (1.0 - beta2) * gi * gi;
      p.m[i] = static_cast<T>(m);
      p.v[i] = static_cast<T>(v);
      double const step = lr * (m / c1) / (std::sqrt(v / c2) + eps);
      val[i] = static_cast<T>(static_cast<double>(val[i]) - step);
    }
  }
  store.project();
}

/// Uniform Xavier initialization. For a Cout x Cin x kh x kw kernel the fans
/// are Cin*kh*kw and Cout*kh*kw.
template <typename T>
Tensor<T> xavier_init(Shape shape, Rng rng)
{
  double const rf = static_cast<double>(shape.h) * shape.w;
  double const fan_in = shape.c * rf;
  double const fan_out = shape.n * rf;
  double const bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> t(shape);
  for (auto &v : t.data) {
    v = static_cast<T>(rng.uniform(-bound, bound));
  }
  return t;
}

template <typename T>
Tensor<T> xavier_init(Shape shape, std::uint64_t seed)
{
  return xavier_init<T>(shape, Rng(seed, "xavier"));
}

} // namespace jdsi::nn
