// mupar: zero-shot hyperparameter transfer. Tune at a small scale, copy the
// width-independent point to the target scale, and validate with wider-is-
// better scans and reverse (simulated-width) replication runs.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "mupar/sweep.hpp"

namespace mupar {

inline bool mup_scheme(Scheme s) {
  return s == Scheme::MuPT3 || s == Scheme::MuPT8 || s == Scheme::MuPT9;
}

// ---------------------------------------------------------------------------
// zero-shot copy

struct TransferReport {
  HpPoint hp;
  ScalePoint proxy;
  ScalePoint target;
  bool naive_mode = false;  // scheme does not preserve feature scales
  std::vector<std::string> warnings;
  std::vector<SweepRecord> target_records;
  double target_mean_loss = std::numeric_limits<double>::infinity();
  int diverged_seeds = 0;
  // optional comparisons, NaN when not run
  double naive_loss = std::numeric_limits<double>::quiet_NaN();
  double oracle_best_loss = std::numeric_limits<double>::quiet_NaN();
};

// trains the target scale with the proxy-tuned point; proxy and target share
// the setup (hence base shape) by construction
inline TransferReport mu_transfer(const TrialSetup& setup, const HpPoint& proxy_best,
                                  const ScalePoint& proxy, const ScalePoint& target,
                                  const SweepConfig& cfg) {
  proxy.validate();
  target.validate();
  if (cfg.seeds.empty()) throw std::invalid_argument("transfer: need at least one seed");

  TransferReport rep;
  rep.hp = proxy_best;
  rep.proxy = proxy;
  rep.target = target;
  if (!mup_scheme(setup.scheme)) {
    rep.naive_mode = true;
    rep.warnings.push_back("naive transfer: scheme does not preserve feature learning across "
                           "width; copied hyperparameters carry no stability guarantee");
  }

  rep.target_records = sweep(setup, {proxy_best}, target, cfg);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rep.target_records) {
    if (r.diverged || !std::isfinite(r.final_train_loss)) {
      ++rep.diverged_seeds;
      continue;
    }
    sum += r.final_train_loss;
    ++n;
  }
  if (n > 0)
    rep.target_mean_loss = sum / n;
  else
    rep.warnings.push_back("every target seed diverged");
  return rep;
}

inline std::string transfer_json(const TransferReport& rep) {
  nlohmann::json j;
  j["hp"] = rep.hp.values;
  j["schedule"] = rep.hp.schedule;
  j["proxy"] = rep.proxy.key();
  j["target"] = rep.target.key();
  j["naive_mode"] = rep.naive_mode;
  j["warnings"] = rep.warnings;
  j["target_mean_loss"] = rep.target_mean_loss;
  j["diverged_seeds"] = rep.diverged_seeds;
  if (std::isfinite(rep.naive_loss)) j["naive_loss"] = rep.naive_loss;
  if (std::isfinite(rep.oracle_best_loss)) j["oracle_best_loss"] = rep.oracle_best_loss;
  j["seeds"] = nlohmann::json::array();
  for (const auto& r : rep.target_records)
    j["seeds"].push_back({{"seed", r.seed},
                          {"train_loss", r.final_train_loss},
                          {"val_loss", r.val_loss},
                          {"diverged", r.diverged}});
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// wider-is-better scan

struct WiderReport {
  std::vector<int64_t> widths;
  std::vector<int64_t> checkpoint_steps;
  std::vector<std::vector<double>> mean_loss;  // [checkpoint][width]
  std::vector<int> violations;                 // per checkpoint, beyond the band
  double band = 0.02;
  std::vector<int64_t> diverged_widths;
};

// fixed hp, growing width: under a feature-learning scheme the train loss at
// every checkpoint should not get worse as width grows (within the noise band)
inline WiderReport wider_is_better_scan(const TrialSetup& setup, const HpPoint& hp,
                                        std::vector<int64_t> widths, ScalePoint base_scale,
                                        const SweepConfig& cfg,
                                        std::vector<int64_t> checkpoints = {},
                                        double band = 0.02) {
  if (widths.empty()) throw std::invalid_argument("wider scan: need at least one width");
  base_scale.validate();
  if (checkpoints.empty()) {
    for (int64_t q = 1; q <= 4; ++q) {
      int64_t t = std::max<int64_t>(1, base_scale.steps * q / 4);
      if (checkpoints.empty() || checkpoints.back() != t) checkpoints.push_back(t);
    }
  }

  WiderReport rep;
  rep.widths = widths;
  rep.checkpoint_steps = checkpoints;
  rep.band = band;

  // loss curve means per width; keyed slots, one trial per (width, seed)
  const size_t ns = cfg.seeds.size();
  std::vector<SweepRecord> records(widths.size() * ns);
  parallel_for(int64_t(records.size()), worker_count(cfg.workers), [&](int64_t i) {
    size_t wi = size_t(i) / ns, si = size_t(i) % ns;
    ScalePoint scale = base_scale;
    scale.width = widths[wi];
    records[size_t(i)] = run_sweep_trial(setup, hp, scale, cfg.seeds[si]);
  });

  std::vector<bool> width_ok(widths.size(), true);
  for (size_t wi = 0; wi < widths.size(); ++wi)
    for (size_t si = 0; si < ns; ++si)
      if (records[wi * ns + si].diverged) width_ok[wi] = false;
  for (size_t wi = 0; wi < widths.size(); ++wi)
    if (!width_ok[wi]) rep.diverged_widths.push_back(widths[wi]);

  for (int64_t t : checkpoints) {
    std::vector<double> row(widths.size(), std::numeric_limits<double>::quiet_NaN());
    for (size_t wi = 0; wi < widths.size(); ++wi) {
      if (!width_ok[wi]) continue;
      double sum = 0.0;
      for (size_t si = 0; si < ns; ++si) {
        const auto& curve = records[wi * ns + si].loss_curve;
        sum += curve[size_t(std::min<int64_t>(t, int64_t(curve.size())) - 1)];
      }
      row[wi] = sum / double(ns);
    }
    int bad = 0;
    for (size_t wi = 0; wi + 1 < widths.size(); ++wi) {
      if (!width_ok[wi] || !width_ok[wi + 1]) continue;
      if (row[wi + 1] > row[wi] * (1.0 + band)) ++bad;
    }
    rep.mean_loss.push_back(std::move(row));
    rep.violations.push_back(bad);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// reverse transfer: replicate a large-scale instability on a small model by
// running it with the large scale's width multipliers (sim_width)

struct ReverseReport {
  HpPoint hp;
  ScalePoint from;
  ScalePoint to;
  std::vector<SweepRecord> from_records;
  std::vector<SweepRecord> to_records;
  int from_diverged = 0;
  int to_diverged = 0;
  double to_mean_loss = std::numeric_limits<double>::infinity();
  double optimum_loss = std::numeric_limits<double>::quiet_NaN();
  bool replicated = false;
};

inline ReverseReport reverse_transfer(const TrialSetup& setup, const HpPoint& bad_hp,
                                      const ScalePoint& from, const ScalePoint& to,
                                      const SweepConfig& cfg,
                                      double optimum_loss = std::numeric_limits<double>::quiet_NaN()) {
  from.validate();
  to.validate();
  if (cfg.seeds.empty()) throw std::invalid_argument("reverse transfer: need at least one seed");

  ReverseReport rep;
  rep.hp = bad_hp;
  rep.from = from;
  rep.to = to;
  rep.optimum_loss = optimum_loss;
  rep.from_records = sweep(setup, {bad_hp}, from, cfg);
  rep.to_records = sweep(setup, {bad_hp}, to, cfg);

  double sum = 0.0;
  int n = 0;
  for (const auto& r : rep.from_records)
    if (r.diverged) ++rep.from_diverged;
  for (const auto& r : rep.to_records) {
    if (r.diverged) {
      ++rep.to_diverged;
      continue;
    }
    sum += r.final_train_loss;
    ++n;
  }
  if (n > 0) rep.to_mean_loss = sum / n;

  bool majority = 2 * rep.to_diverged >= int(cfg.seeds.size());
  bool loss_blown = std::isfinite(optimum_loss) && std::isfinite(rep.to_mean_loss) &&
                    rep.to_mean_loss >= 2.0 * optimum_loss;
  rep.replicated = majority || (n == 0) || loss_blown;
  return rep;
}

}  // namespace mupar
