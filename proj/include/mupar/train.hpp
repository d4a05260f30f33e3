#pragma once
// One training trial: feed batches, step the optimizer, watch for divergence.
// The summary losses use an infinite sentinel when a trial diverges so sweep
// argmins can never pick a runaway configuration.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "mupar/optim.hpp"
#include "mupar/param.hpp"

namespace mupar {

struct OptimizerConfig {
  OptimKind table = OptimKind::SGD;  // which learning-rate scaling column applies
  SgdConfig sgd;
  AdamConfig adam;
  Schedule schedule;
  double clip_norm = 0.0;  // 0 disables clipping

  double master_lr() const { return table == OptimKind::SGD ? sgd.master_lr : adam.master_lr; }
  void set_master_lr(double lr) {
    sgd.master_lr = lr;
    adam.master_lr = lr;
  }
  void validate() const { table == OptimKind::SGD ? sgd.validate() : adam.validate(); }

  void step(Model& m, int64_t t) const {
    if (clip_norm > 0) clip_gradients(m, clip_norm);
    if (table == OptimKind::SGD)
      sgd_step(m, sgd, schedule, t);
    else
      adam_step(m, adam, schedule, t);
  }
};

using BatchFn = std::function<Batch(int64_t)>;

struct TrialConfig {
  int64_t steps = 100;
  OptimizerConfig opt;
  double divergence_factor = 10.0;  // loss above factor x initial halts the trial
  int64_t val_batches = 0;
};

struct TrialResult {
  std::vector<double> loss_curve;  // batch loss before each update
  double initial_loss = 0.0;
  double final_train_loss = std::numeric_limits<double>::infinity();
  double val_loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
  int64_t steps_run = 0;
};

inline TrialResult run_trial(Model& m, const TrialConfig& cfg, const BatchFn& train_batch,
                             const BatchFn& val_batch = {}) {
  cfg.opt.validate();
  TrialResult r;
  r.loss_curve.reserve(cfg.steps);

  for (int64_t t = 0; t < cfg.steps; ++t) {
    Batch b = train_batch(t);
    ForwardResult fr = forward_pass(m, b);
    if (t == 0) r.initial_loss = fr.loss_value;
    r.loss_curve.push_back(fr.loss_value);
    if (!fr.finite || fr.loss_value > cfg.divergence_factor * r.initial_loss) {
      r.diverged = true;
      r.steps_run = t;
      return r;
    }
    zero_grads(m);
    fr.tape.backward(fr.loss);
    cfg.opt.step(m, t);
    r.steps_run = t + 1;
  }

  int64_t tail = cfg.steps / 10;
  if (tail < 1) tail = 1;
  double sum = 0;
  for (int64_t i = cfg.steps - tail; i < cfg.steps; ++i) sum += r.loss_curve[i];
  r.final_train_loss = sum / double(tail);

  if (cfg.val_batches > 0 && val_batch) {
    double vsum = 0;
    bool ok = true;
    for (int64_t j = 0; j < cfg.val_batches; ++j) {
      double l = forward_loss(m, val_batch(j));
      if (!std::isfinite(l)) ok = false;
      vsum += l;
    }
    if (ok) r.val_loss = vsum / double(cfg.val_batches);
  }
  return r;
}

}  // namespace mupar
