#pragma once
// Width-aware optimizers: every parameter steps with its own effective
// learning rate (master × table scale), Adam's ε scales with the fan_in
// multiplier, and weight decay is decoupled so it stays width-independent.

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mupar/abc.hpp"
#include "mupar/param.hpp"

namespace mupar {

struct Schedule {
  enum class Kind { constant, linear_decay, cosine, inv_sqrt, step };
  Kind kind = Kind::constant;
  int64_t total_steps = 0;
  std::vector<int64_t> milestones;
  double factor = 0.1;

  static Schedule constant() { return {}; }
  static Schedule linear_decay(int64_t total) { return {Kind::linear_decay, total, {}, 0.1}; }
  static Schedule cosine(int64_t total) { return {Kind::cosine, total, {}, 0.1}; }
  static Schedule inv_sqrt() { return {Kind::inv_sqrt, 0, {}, 0.1}; }
  static Schedule step_decay(std::vector<int64_t> milestones, double factor) {
    return {Kind::step, 0, std::move(milestones), factor};
  }

  double at(int64_t step) const {
    switch (kind) {
      case Kind::constant: return 1.0;
      case Kind::linear_decay: {
        if (total_steps <= 0) throw std::invalid_argument("schedule: linear_decay needs total_steps");
        double f = 1.0 - double(step) / double(total_steps);
        return f > 0 ? f : 0.0;
      }
      case Kind::cosine: {
        if (total_steps <= 0) throw std::invalid_argument("schedule: cosine needs total_steps");
        double s = step < total_steps ? double(step) : double(total_steps);
        return 0.5 * (1.0 + std::cos(3.14159265358979323846 * s / double(total_steps)));
      }
      case Kind::inv_sqrt: return 1.0 / std::sqrt(1.0 + double(step));
      case Kind::step: {
        int hits = 0;
        for (int64_t m : milestones)
          if (m <= step) ++hits;
        return ipow(factor, hits);
      }
    }
    return 1.0;
  }
};

inline double schedule_value(const Schedule& s, int64_t step) { return s.at(step); }

struct SgdConfig {
  double master_lr = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;  // decoupled multiplicative shrink
  std::map<std::string, double> group_lr;

  double master_for(const std::string& group) const {
    auto it = group_lr.find(group);
    return it == group_lr.end() ? master_lr : it->second;
  }
  void validate() const {
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("sgd: momentum must be in [0,1)");
    if (weight_decay < 0) throw std::invalid_argument("sgd: weight_decay must be nonnegative");
  }
};

struct AdamConfig {
  enum class Variant { adam, adamw, adagrad, rmsprop };
  enum class EpsPlacement { pre_sqrt, post_sqrt };

  Variant variant = Variant::adam;
  double master_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_base = 0.0;
  EpsPlacement eps_placement = EpsPlacement::post_sqrt;
  double weight_decay = 0.0;  // decoupled; only the adamw variant accepts it
  std::map<std::string, double> group_lr;

  double master_for(const std::string& group) const {
    auto it = group_lr.find(group);
    return it == group_lr.end() ? master_lr : it->second;
  }
  void validate() const {
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw std::invalid_argument("adam: betas must be in [0,1)");
    if (eps_base < 0) throw std::invalid_argument("adam: eps must be nonnegative");
    if (weight_decay < 0) throw std::invalid_argument("adam: weight_decay must be nonnegative");
    if (weight_decay > 0 && variant != Variant::adamw)
      throw std::invalid_argument("adam: coupled weight decay breaks width scaling; use adamw");
  }
};

inline const char* to_string(AdamConfig::Variant v) {
  switch (v) {
    case AdamConfig::Variant::adam: return "adam";
    case AdamConfig::Variant::adamw: return "adamw";
    case AdamConfig::Variant::adagrad: return "adagrad";
    case AdamConfig::Variant::rmsprop: return "rmsprop";
  }
  return "?";
}

namespace detail {
// decay uses the master LR and schedule, never the effective LR, so the
// shrink factor is identical at every width and unchanged by θ-rescaling
inline void decoupled_decay(ParamTensor& p, double master, double sched, double wd) {
  double shrink = 1.0 - master * sched * wd;
  double* w = p.value.data();
  for (int64_t i = 0; i < p.value.size(); ++i) w[i] *= shrink;
}
}  // namespace detail

inline void sgd_step(Model& m, const SgdConfig& cfg, const Schedule& sched, int64_t step) {
  cfg.validate();
  double s = sched.at(step);
  for (auto& p : m.params) {
    double master = cfg.master_for(p.lr_group);
    double lr = effective_lr(p.triple, p.ishape, master) * s;
    if (cfg.weight_decay > 0) detail::decoupled_decay(p, master, s, cfg.weight_decay);
    const double* g = p.grad.data();
    double* w = p.value.data();
    if (cfg.momentum > 0) {
      if (!p.opt_m.defined()) p.opt_m = Tensor(p.value.shape());
      double* buf = p.opt_m.data();
      for (int64_t i = 0; i < p.value.size(); ++i) {
        buf[i] = cfg.momentum * buf[i] + g[i];
        w[i] -= lr * buf[i];
      }
    } else {
      for (int64_t i = 0; i < p.value.size(); ++i) w[i] -= lr * g[i];
    }
  }
}

inline void adam_step(Model& m, const AdamConfig& cfg, const Schedule& sched, int64_t step) {
  cfg.validate();
  using V = AdamConfig::Variant;
  double s = sched.at(step);
  double t = double(step + 1);
  bool pre = cfg.eps_placement == AdamConfig::EpsPlacement::pre_sqrt;
  double bc1 = 1.0 - std::pow(cfg.beta1, t);
  double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (auto& p : m.params) {
    double master = cfg.master_for(p.lr_group);
    double lr = effective_lr(p.triple, p.ishape, master) * s;
    double fim = p.ishape.fan_in_mult();
    double eps = pre ? cfg.eps_base / (fim * fim) : cfg.eps_base / fim;
    if (cfg.variant == V::adamw && cfg.weight_decay > 0)
      detail::decoupled_decay(p, master, s, cfg.weight_decay);

    if (!p.opt_v.defined()) p.opt_v = Tensor(p.value.shape());
    const double* g = p.grad.data();
    double* w = p.value.data();
    double* v = p.opt_v.data();

    if (cfg.variant == V::adam || cfg.variant == V::adamw) {
      if (!p.opt_m.defined()) p.opt_m = Tensor(p.value.shape());
      double* mo = p.opt_m.data();
      for (int64_t i = 0; i < p.value.size(); ++i) {
        mo[i] = cfg.beta1 * mo[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        double mhat = mo[i] / bc1;
        double vhat = v[i] / bc2;
        double denom = pre ? std::sqrt(vhat + eps) : std::sqrt(vhat) + eps;
        if (denom > 0) w[i] -= lr * mhat / denom;
      }
    } else {
      for (int64_t i = 0; i < p.value.size(); ++i) {
        v[i] = cfg.variant == V::adagrad ? v[i] + g[i] * g[i]
                                         : cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        double denom = pre ? std::sqrt(v[i] + eps) : std::sqrt(v[i]) + eps;
        if (denom > 0) w[i] -= lr * g[i] / denom;
      }
    }
  }
}

inline double grad_global_norm(const Model& m) {
  double s = 0;
  for (const auto& p : m.params) {
    const double* g = p.grad.data();
    for (int64_t i = 0; i < p.grad.size(); ++i) s += g[i] * g[i];
  }
  return std::sqrt(s);
}

// returns the applied factor min(1, max_norm/norm)
inline double clip_gradients(Model& m, double max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double norm = grad_global_norm(m);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  double f = max_norm / norm;
  for (auto& p : m.params) {
    double* g = p.grad.data();
    for (int64_t i = 0; i < p.grad.size(); ++i) g[i] *= f;
  }
  return f;
}

}  // namespace mupar
