// mupar: hyperparameter sweeps over width-independent knobs. Points carry only
// transferable hyperparameters; scale dimensions (width, depth, batch, context,
// steps) live in ScalePoint and are swept across, never tuned.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mupar/parallel.hpp"
#include "mupar/train.hpp"

namespace mupar {

struct HpPoint {
  std::map<std::string, double> values;
  std::string schedule = "constant";

  static const std::vector<std::string>& transferable_keys() {
    static const std::vector<std::string> keys = {
        "master_lr", "lr_input", "lr_hidden", "lr_output", "lr_scalar", "init_std",
        "alpha_output", "alpha_attn", "alpha_emb", "momentum", "beta1", "beta2", "eps"};
    return keys;
  }

  static bool transferable(const std::string& key) {
    for (const auto& k : transferable_keys())
      if (k == key) return true;
    return false;
  }

  HpPoint& set(const std::string& key, double v) {
    if (!transferable(key))
      throw std::invalid_argument("hp '" + key + "' is not transferable (regularization and "
                                  "unknown knobs are tuned per scale, not swept)");
    values[key] = v;
    return *this;
  }

  double get(const std::string& key, double fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }
  bool has(const std::string& key) const { return values.count(key) != 0; }
  double lr() const { return get("master_lr", 0.0); }

  std::string key() const {
    char buf[64];
    std::string out;
    for (const auto& [k, v] : values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += k;
      out += '=';
      out += buf;
      out += ';';
    }
    out += '|';
    out += schedule;
    return out;
  }
};

struct ScalePoint {
  int64_t width = 64;
  int64_t depth = 2;
  int64_t batch = 32;
  int64_t seq_len = 1;
  int64_t steps = 100;
  // > 0: compute every width multiplier as if the model were this wide while
  // keeping the physical width; 0 disables
  int64_t sim_width = 0;

  void validate() const {
    if (width < 1 || depth < 1 || batch < 1 || seq_len < 1 || steps < 1)
      throw std::invalid_argument("scale point: all dimensions must be >= 1");
    if (sim_width < 0) throw std::invalid_argument("scale point: sim_width must be >= 0");
  }

  std::string key() const {
    return std::to_string(width) + "x" + std::to_string(depth) + "b" + std::to_string(batch) +
           "s" + std::to_string(seq_len) + "t" + std::to_string(steps) + "v" +
           std::to_string(sim_width);
  }
};

struct SweepRecord {
  HpPoint hp;
  ScalePoint scale;
  uint64_t seed = 0;
  double final_train_loss = std::numeric_limits<double>::infinity();
  double val_loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
  int64_t steps_run = 0;
  std::vector<double> loss_curve;
};

// ---------------------------------------------------------------------------
// search spaces

struct SearchSpace {
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  std::string schedule = "constant";

  static SearchSpace grid(std::vector<std::pair<std::string, std::vector<double>>> axes) {
    SearchSpace s;
    s.axes = std::move(axes);
    return s;
  }

  std::vector<HpPoint> points() const {
    if (axes.empty()) throw std::invalid_argument("search space: no axes");
    size_t total = 1;
    for (const auto& [name, vals] : axes) {
      if (vals.empty()) throw std::invalid_argument("search space: axis '" + name + "' is empty");
      total *= vals.size();
    }
    std::vector<HpPoint> pts(total);
    for (size_t i = 0; i < total; ++i) {
      pts[i].schedule = schedule;
      size_t rest = i;
      for (size_t a = axes.size(); a-- > 0;) {
        const auto& [name, vals] = axes[a];
        pts[i].set(name, vals[rest % vals.size()]);
        rest /= vals.size();
      }
    }
    return pts;
  }
};

struct RandomAxis {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  bool log_scale = false;
};

inline std::vector<HpPoint> random_points(const std::vector<RandomAxis>& axes, int k,
                                          SeededRng rng) {
  if (axes.empty() || k < 1) throw std::invalid_argument("random search: empty space");
  std::vector<HpPoint> pts(static_cast<size_t>(k));
  for (auto& p : pts)
    for (const auto& ax : axes) {
      if (!(ax.hi >= ax.lo) || (ax.log_scale && ax.lo <= 0))
        throw std::invalid_argument("random search: bad range for '" + ax.name + "'");
      double u = rng.u01();
      double v = ax.log_scale ? std::exp(std::log(ax.lo) + u * (std::log(ax.hi) - std::log(ax.lo)))
                              : ax.lo + u * (ax.hi - ax.lo);
      p.set(ax.name, v);
    }
  return pts;
}

// ---------------------------------------------------------------------------
// running trials

// everything needed to run one deterministic trial at a given (hp, scale, seed)
struct TrialSetup {
  Scheme scheme = Scheme::MuPT3;
  OptimKind table = OptimKind::SGD;
  std::function<Model(const HpPoint&, const ScalePoint&, uint64_t seed)> build;
  std::function<BatchFn(const ScalePoint&, uint64_t seed)> train_data;
  std::function<BatchFn(const ScalePoint&, uint64_t seed)> val_data;  // optional
  int64_t val_batches = 0;
  double divergence_factor = 10.0;
};

inline Schedule make_schedule(const std::string& kind, int64_t total_steps) {
  if (kind == "constant") return Schedule::constant();
  if (kind == "linear") return Schedule::linear_decay(total_steps);
  if (kind == "cosine") return Schedule::cosine(total_steps);
  if (kind == "invsqrt") return Schedule::inv_sqrt();
  throw std::invalid_argument("unknown schedule '" + kind + "'");
}

inline OptimizerConfig hp_optimizer(const TrialSetup& setup, const HpPoint& hp,
                                    const ScalePoint& scale) {
  OptimizerConfig opt;
  opt.table = setup.table;
  if (hp.has("master_lr")) opt.set_master_lr(hp.get("master_lr", 0.0));
  static const std::pair<const char*, const char*> groups[] = {
      {"lr_input", "input"}, {"lr_hidden", "hidden"}, {"lr_output", "output"},
      {"lr_scalar", "scalar"}};
  for (const auto& [key, group] : groups)
    if (hp.has(key)) {
      opt.sgd.group_lr[group] = hp.get(key, 0.0);
      opt.adam.group_lr[group] = hp.get(key, 0.0);
    }
  if (hp.has("momentum")) opt.sgd.momentum = hp.get("momentum", 0.0);
  if (hp.has("beta1")) opt.adam.beta1 = hp.get("beta1", 0.9);
  if (hp.has("beta2")) opt.adam.beta2 = hp.get("beta2", 0.999);
  if (hp.has("eps")) opt.adam.eps_base = hp.get("eps", 0.0);
  opt.schedule = make_schedule(hp.schedule, scale.steps);
  opt.validate();
  return opt;
}

inline SweepRecord run_sweep_trial(const TrialSetup& setup, const HpPoint& hp,
                                   const ScalePoint& scale, uint64_t seed) {
  scale.validate();
  SweepRecord rec;
  rec.hp = hp;
  rec.scale = scale;
  rec.seed = seed;

  Model m = setup.build(hp, scale, seed);
  TrialConfig tc;
  tc.steps = scale.steps;
  tc.divergence_factor = setup.divergence_factor;
  tc.val_batches = setup.val_batches;
  tc.opt = hp_optimizer(setup, hp, scale);

  BatchFn train = setup.train_data(scale, seed);
  BatchFn val = setup.val_data ? setup.val_data(scale, seed) : BatchFn{};
  TrialResult r = run_trial(m, tc, train, val);

  rec.final_train_loss = r.final_train_loss;
  rec.val_loss = r.val_loss;
  rec.diverged = r.diverged;
  rec.steps_run = r.steps_run;
  rec.loss_curve = std::move(r.loss_curve);
  return rec;
}

struct SweepConfig {
  std::vector<uint64_t> seeds = {1, 2, 3};
  int workers = 0;  // 0: MUPAR_WORKERS or serial
};

// one record per (point, seed); records land in preallocated slots keyed by
// index, so worker count and completion order never change the output
inline std::vector<SweepRecord> sweep(const TrialSetup& setup, const std::vector<HpPoint>& points,
                                      const ScalePoint& scale, const SweepConfig& cfg) {
  if (points.empty()) throw std::invalid_argument("sweep: empty search space");
  if (cfg.seeds.empty()) throw std::invalid_argument("sweep: need at least one seed");
  scale.validate();

  const size_t ns = cfg.seeds.size();
  std::vector<SweepRecord> records(points.size() * ns);
  parallel_for(int64_t(records.size()), worker_count(cfg.workers), [&](int64_t i) {
    size_t pi = size_t(i) / ns, si = size_t(i) % ns;
    records[size_t(i)] = run_sweep_trial(setup, points[pi], scale, cfg.seeds[si]);
  });
  return records;
}

// ---------------------------------------------------------------------------
// selection

enum class SelectMetric { train_loss, val_loss };

// thrown by select_best so callers (and the CLI exit code) can tell "nothing
// survived" apart from ordinary failures
struct NoViableHp : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Selection {
  HpPoint hp;
  double mean_loss = std::numeric_limits<double>::infinity();
  int n_seeds = 0;
};

// argmin of the seed-mean metric over hp points where every seed finished and
// the metric is finite; ties break toward the smaller lr, then the
// lexicographically smaller point
inline Selection select_best(const std::vector<SweepRecord>& records, SelectMetric metric) {
  struct Bucket {
    const HpPoint* hp = nullptr;
    double sum = 0.0;
    int n = 0;
    bool viable = true;
  };
  std::map<std::string, Bucket> buckets;
  for (const auto& r : records) {
    Bucket& b = buckets[r.hp.key()];
    b.hp = &r.hp;
    double v = metric == SelectMetric::train_loss ? r.final_train_loss : r.val_loss;
    if (r.diverged || !std::isfinite(v)) {
      b.viable = false;
      continue;
    }
    b.sum += v;
    b.n += 1;
  }

  const Bucket* best = nullptr;
  std::string best_key;
  double best_mean = 0.0;
  for (const auto& [key, b] : buckets) {
    if (!b.viable || b.n == 0) continue;
    double mean = b.sum / b.n;
    if (best) {
      if (mean > best_mean) continue;
      if (mean == best_mean) {
        if (b.hp->lr() > best->hp->lr()) continue;
        if (b.hp->lr() == best->hp->lr() && key >= best_key) continue;
      }
    }
    best = &b;
    best_key = key;
    best_mean = mean;
  }
  if (!best) throw NoViableHp("no viable HP: every point diverged or lacks the metric");

  Selection sel;
  sel.hp = *best->hp;
  sel.mean_loss = best_mean;
  sel.n_seeds = best->n;
  return sel;
}

// ---------------------------------------------------------------------------
// CSV export: hp fields, scale fields, seed, step, losses, diverged

inline std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::vector<std::string> hp_keys;
  for (const auto& r : records)
    for (const auto& [k, v] : r.hp.values) {
      bool seen = false;
      for (const auto& h : hp_keys) seen = seen || h == k;
      if (!seen) hp_keys.push_back(k);
    }
  std::sort(hp_keys.begin(), hp_keys.end());

  std::string out;
  for (const auto& k : hp_keys) {
    out += k;
    out += ',';
  }
  out += "schedule,width,depth,batch,seq_len,steps,sim_width,seed,step,train_loss,val_loss,diverged\n";

  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
  };
  for (const auto& r : records) {
    for (const auto& k : hp_keys) {
      num(r.hp.get(k, std::numeric_limits<double>::quiet_NaN()));
      out += ',';
    }
    out += r.hp.schedule;
    out += ',';
    out += std::to_string(r.scale.width) + ',' + std::to_string(r.scale.depth) + ',' +
           std::to_string(r.scale.batch) + ',' + std::to_string(r.scale.seq_len) + ',' +
           std::to_string(r.scale.steps) + ',' + std::to_string(r.scale.sim_width) + ',';
    out += std::to_string(r.seed);
    out += ',';
    out += std::to_string(r.steps_run);
    out += ',';
    num(r.final_train_loss);
    out += ',';
    num(r.val_loss);
    out += ',';
    out += r.diverged ? '1' : '0';
    out += '\n';
  }
  return out;
}

}  // namespace mupar
