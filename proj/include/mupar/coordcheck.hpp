#pragma once
// Coordinate checking: train width-laddered copies of a model for a few
// steps, track how activation coordinates move, and fit log-log slopes vs
// width. Flat slopes mean the parametrization feeds every layer a
// width-independent update; growth means blowup, shrinkage means a layer
// that stops learning as the model widens.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mupar/param.hpp"
#include "mupar/rng.hpp"
#include "mupar/train.hpp"

namespace mupar {

// ---------------------------------------------------------------------------
// log-log least squares

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // rms in log space
  bool defined = false;
};

// points are (width, metric); zero or negative metrics are dropped, and at
// least three positive points are needed for a defined fit
inline SlopeFit fit_slope(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> logs;
  for (auto [w, m] : pts)
    if (w > 0 && m > 0 && std::isfinite(m)) logs.push_back({std::log(w), std::log(m)});
  SlopeFit f;
  if (logs.size() < 3) return f;
  double n = double(logs.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : logs) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double det = n * sxx - sx * sx;
  if (det <= 0) return f;
  f.slope = (n * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / n;
  double rss = 0;
  for (auto [x, y] : logs) {
    double e = y - (f.intercept + f.slope * x);
    rss += e * e;
  }
  f.residual = std::sqrt(rss / n);
  f.defined = true;
  return f;
}

// ---------------------------------------------------------------------------
// stats, fits, verdicts

struct CoordRow {
  std::string activation;
  int64_t width = 0;
  int step = 0;
  double delta_std = 0.0;  // std of coordinates of x_t - x_0
  double abs_mean = 0.0;   // mean |coordinate| of x_t
  uint64_t seed = 0;
  bool diverged = false;
};

struct CoordStat {
  std::string activation;
  int64_t width = 0;
  int step = 0;
  double delta_std = 0.0;
  double abs_mean = 0.0;
};

struct ActivationFit {
  std::string activation;
  int step = 0;
  SlopeFit delta;
  SlopeFit abs_mean;
};

enum class CoordLabel { stable, blowup, vanish };

inline const char* to_string(CoordLabel l) {
  switch (l) {
    case CoordLabel::stable: return "stable";
    case CoordLabel::blowup: return "blowup";
    case CoordLabel::vanish: return "vanish";
  }
  return "?";
}

struct ActivationVerdict {
  std::string activation;
  CoordLabel label = CoordLabel::stable;
  double worst_slope = 0.0;
  int step = 0;
};

struct CoordVerdict {
  bool pass = true;
  std::vector<ActivationVerdict> per_activation;
};

// outputs may start at width-dependent scale by design (zero or shrinking
// init), so the init-size vanish signal skips logit-like activations
inline bool init_scale_exempt(std::string_view name) {
  return name == "logits" || name.rfind("attn_logits", 0) == 0;
}

inline CoordVerdict verdict_from_fits(const std::vector<ActivationFit>& fits, double tol) {
  CoordVerdict v;
  std::vector<std::string> order;
  for (const auto& f : fits)
    if (std::find(order.begin(), order.end(), f.activation) == order.end())
      order.push_back(f.activation);

  for (const auto& name : order) {
    ActivationVerdict av;
    av.activation = name;
    double blow = -1e300, vanish = 1e300, worst_abs = 0;
    int blow_step = 0, vanish_step = 0, abs_step = 0;
    for (const auto& f : fits) {
      if (f.activation != name) continue;
      if (f.delta.defined && f.step >= 1) {
        double s = f.delta.slope;
        if (s > blow) blow = s, blow_step = f.step;
        if (s < vanish) vanish = s, vanish_step = f.step;
        if (std::abs(s) > std::abs(worst_abs)) worst_abs = s, abs_step = f.step;
      }
      if (f.abs_mean.defined && f.step == 0 && !init_scale_exempt(name) &&
          f.abs_mean.slope < -tol && f.abs_mean.slope < vanish) {
        vanish = f.abs_mean.slope;
        vanish_step = 0;
      }
    }
    if (blow > tol) {
      av.label = CoordLabel::blowup;
      av.worst_slope = blow;
      av.step = blow_step;
      v.pass = false;
    } else if (vanish < -tol) {
      av.label = CoordLabel::vanish;
      av.worst_slope = vanish;
      av.step = vanish_step;
      v.pass = false;
    } else {
      av.worst_slope = worst_abs;
      av.step = abs_step;
    }
    v.per_activation.push_back(std::move(av));
  }
  return v;
}

// ---------------------------------------------------------------------------
// the check itself

using ModelFamily = std::function<Model(int64_t width, uint64_t seed)>;

struct CoordCheckConfig {
  std::vector<int64_t> widths;  // needs >= 3 spanning at least 8x
  int steps = 4;
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  OptimizerConfig opt;
  double tol = 0.2;
};

struct CoordCheckReport {
  std::vector<CoordRow> rows;    // per (activation, width, step, seed)
  std::vector<CoordStat> stats;  // seed-averaged, diverged widths dropped
  std::vector<ActivationFit> fits;
  CoordVerdict verdicts;
  double tol = 0.2;
  int steps = 0;
  std::vector<int64_t> widths;  // sorted
  std::vector<uint64_t> seeds;
  std::vector<int64_t> diverged_widths;
};

inline CoordVerdict verdict(const CoordCheckReport& rep, double tol = 0.2) {
  return verdict_from_fits(rep.fits, tol);
}

namespace detail {

inline double coord_delta_std(const std::vector<double>& now, const std::vector<double>& init) {
  double mean = 0;
  size_t n = now.size();
  for (size_t i = 0; i < n; ++i) mean += now[i] - init[i];
  mean /= double(n);
  double var = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = now[i] - init[i] - mean;
    var += d * d;
  }
  return std::sqrt(var / double(n));
}

inline double coord_abs_mean(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += std::abs(v);
  return s / double(x.size());
}

inline bool all_finite(const Capture& c) {
  for (const auto& [name, vals] : c.named)
    for (double v : vals)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace detail

inline CoordCheckReport run_coord_check(const ModelFamily& family, const CoordCheckConfig& cfg,
                                        const BatchFn& batches) {
  if (cfg.widths.size() < 3) throw std::invalid_argument("coord check: need at least 3 widths");
  auto [lo, hi] = std::minmax_element(cfg.widths.begin(), cfg.widths.end());
  if (*hi < 8 * *lo) throw std::invalid_argument("coord check: widths must span an 8x range");
  if (cfg.steps < 1) throw std::invalid_argument("coord check: need at least one step");
  if (cfg.seeds.empty()) throw std::invalid_argument("coord check: need at least one seed");
  cfg.opt.validate();

  CoordCheckReport rep;
  rep.tol = cfg.tol;
  rep.steps = cfg.steps;
  rep.seeds = cfg.seeds;
  rep.widths = cfg.widths;
  std::sort(rep.widths.begin(), rep.widths.end());
  rep.widths.erase(std::unique(rep.widths.begin(), rep.widths.end()), rep.widths.end());

  Batch probe = batches(0);

  for (int64_t width : cfg.widths) {
    for (uint64_t seed : cfg.seeds) {
      size_t cell_begin = rep.rows.size();
      bool diverged = false;

      Model m = family(width, seed);
      Capture c0;
      double l0 = forward_loss(m, probe, &c0);
      if (!std::isfinite(l0) || !detail::all_finite(c0)) diverged = true;
      for (const auto& [name, vals] : c0.named) {
        CoordRow row;
        row.activation = name;
        row.width = width;
        row.step = 0;
        row.delta_std = 0.0;
        row.abs_mean = detail::coord_abs_mean(vals);
        row.seed = seed;
        rep.rows.push_back(std::move(row));
      }

      for (int t = 1; t <= cfg.steps && !diverged; ++t) {
        ForwardResult fr = forward_pass(m, batches(t));
        if (!fr.finite) {
          diverged = true;
          break;
        }
        zero_grads(m);
        fr.tape.backward(fr.loss);
        cfg.opt.step(m, t - 1);

        Capture ct;
        double lt = forward_loss(m, probe, &ct);
        if (!std::isfinite(lt) || !detail::all_finite(ct)) {
          diverged = true;
          break;
        }
        for (size_t a = 0; a < ct.named.size(); ++a) {
          CoordRow row;
          row.activation = ct.named[a].first;
          row.width = width;
          row.step = t;
          row.delta_std = detail::coord_delta_std(ct.named[a].second, c0.named[a].second);
          row.abs_mean = detail::coord_abs_mean(ct.named[a].second);
          row.seed = seed;
          rep.rows.push_back(std::move(row));
        }
      }

      if (diverged) {
        for (size_t i = cell_begin; i < rep.rows.size(); ++i) rep.rows[i].diverged = true;
        if (std::find(rep.diverged_widths.begin(), rep.diverged_widths.end(), width) ==
            rep.diverged_widths.end())
          rep.diverged_widths.push_back(width);
      }
    }
  }
  std::sort(rep.diverged_widths.begin(), rep.diverged_widths.end());

  // seed-averaged stats over clean widths, keyed (activation order, width, step)
  std::vector<std::string> acts;
  for (const auto& r : rep.rows)
    if (std::find(acts.begin(), acts.end(), r.activation) == acts.end()) acts.push_back(r.activation);

  auto is_diverged_width = [&](int64_t w) {
    return std::binary_search(rep.diverged_widths.begin(), rep.diverged_widths.end(), w);
  };

  for (const auto& name : acts) {
    for (int64_t w : rep.widths) {
      if (is_diverged_width(w)) continue;
      for (int t = 0; t <= cfg.steps; ++t) {
        double ds = 0, am = 0;
        int64_t cnt = 0;
        for (const auto& r : rep.rows)
          if (r.activation == name && r.width == w && r.step == t) {
            ds += r.delta_std;
            am += r.abs_mean;
            ++cnt;
          }
        if (cnt == 0) continue;
        rep.stats.push_back({name, w, t, ds / double(cnt), am / double(cnt)});
      }
    }
  }

  for (const auto& name : acts) {
    for (int t = 0; t <= cfg.steps; ++t) {
      std::vector<std::pair<double, double>> dpts, apts;
      for (const auto& s : rep.stats)
        if (s.activation == name && s.step == t) {
          dpts.push_back({double(s.width), s.delta_std});
          apts.push_back({double(s.width), s.abs_mean});
        }
      if (dpts.empty()) continue;
      ActivationFit f;
      f.activation = name;
      f.step = t;
      f.delta = fit_slope(dpts);
      f.abs_mean = fit_slope(apts);
      rep.fits.push_back(std::move(f));
    }
  }

  rep.verdicts = verdict_from_fits(rep.fits, cfg.tol);
  return rep;
}

// ---------------------------------------------------------------------------
// emission

inline std::string coordcheck_csv(const CoordCheckReport& rep) {
  std::string out = "activation,width,step,metric,seed\n";
  char buf[64];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.delta_std);
    out += r.activation;
    out += ',';
    out += std::to_string(r.width);
    out += ',';
    out += std::to_string(r.step);
    out += ',';
    out += buf;
    out += ',';
    out += std::to_string(r.seed);
    out += '\n';
  }
  return out;
}

inline std::string coordcheck_json(const CoordCheckReport& rep) {
  nlohmann::json j;
  j["pass"] = rep.verdicts.pass;
  j["tol"] = rep.tol;
  j["steps"] = rep.steps;
  j["widths"] = rep.widths;
  j["seeds"] = rep.seeds;
  j["diverged_widths"] = rep.diverged_widths;
  j["activations"] = nlohmann::json::array();
  for (const auto& av : rep.verdicts.per_activation) {
    nlohmann::json a;
    a["name"] = av.activation;
    a["label"] = to_string(av.label);
    a["worst_slope"] = av.worst_slope;
    a["worst_step"] = av.step;
    a["fits"] = nlohmann::json::array();
    for (const auto& f : rep.fits) {
      if (f.activation != av.activation) continue;
      nlohmann::json jf;
      jf["step"] = f.step;
      jf["delta_slope"] = f.delta.defined ? f.delta.slope : 0.0;
      jf["delta_defined"] = f.delta.defined;
      jf["delta_residual"] = f.delta.residual;
      jf["absmean_slope"] = f.abs_mean.defined ? f.abs_mean.slope : 0.0;
      jf["absmean_defined"] = f.abs_mean.defined;
      a["fits"].push_back(std::move(jf));
    }
    j["activations"].push_back(std::move(a));
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// entry-size laws for the random-matrix structures behind the scaling rules

enum class MatrixKind { gaussian, tensor_product, nonlinear_tensor_product, vector };

inline const char* to_string(MatrixKind k) {
  switch (k) {
    case MatrixKind::gaussian: return "gaussian";
    case MatrixKind::tensor_product: return "tensor_product";
    case MatrixKind::nonlinear_tensor_product: return "nonlinear_tensor_product";
    case MatrixKind::vector: return "vector";
  }
  return "?";
}

struct EntrySizeResult {
  MatrixKind kind = MatrixKind::gaussian;
  bool correlated = false;
  std::vector<std::pair<int64_t, double>> sizes;  // (n, mean |entry| of Av)
  SlopeFit fit;
};

// mean |entry| of (u v^T) x, computed exactly
inline double rank1_entry_size(const std::vector<double>& u, const std::vector<double>& v,
                               const std::vector<double>& x) {
  if (u.size() != v.size() || v.size() != x.size())
    throw std::invalid_argument("rank1_entry_size: length mismatch");
  double c = 0;
  for (size_t i = 0; i < v.size(); ++i) c += v[i] * x[i];
  double s = 0;
  for (double e : u) s += std::abs(e * c);
  return s / double(u.size());
}

namespace detail {

inline void fill_gaussian(std::vector<double>& dst, SeededRng& rng) {
  size_t i = 0;
  for (; i + 1 < dst.size(); i += 2) rng.gaussian_pair(dst[i], dst[i + 1]);
  if (i < dst.size()) dst[i] = rng.gaussian();
}

// streamed row of an implicit iid N(0,1) matrix; the same (stream, row) pair
// always reproduces the same entries, so large A is never materialized
inline void gaussian_row(std::vector<double>& dst, const SeededRng& stream, int64_t row) {
  SeededRng r = stream.fork(uint64_t(row));
  fill_gaussian(dst, r);
}

inline double adam_like_entry(double a1, double a2, double b1, double b2) {
  double p = a1 * b1, q = a2 * b2;
  return (p + q) / std::sqrt(p * p + q * q + 1e-12);
}

}  // namespace detail

// coordinates of A A^T 1 for A with N(0, 1/n) entries; the diagonal
// concentrates at 1 while the cross terms add unit gaussian noise
inline std::vector<double> gaussian_correlated_coords(int64_t n, SeededRng rng) {
  SeededRng astream = rng.fork("A");
  std::vector<double> row(n), x(n, 0.0), coords(n, 0.0);
  double scale = 1.0 / std::sqrt(double(n));
  for (int64_t i = 0; i < n; ++i) {
    detail::gaussian_row(row, astream, i);
    for (int64_t j = 0; j < n; ++j) x[j] += scale * row[j];  // x = A^T 1
  }
  for (int64_t i = 0; i < n; ++i) {
    detail::gaussian_row(row, astream, i);
    double s = 0;
    for (int64_t j = 0; j < n; ++j) s += scale * row[j] * x[j];
    coords[i] = s;
  }
  return coords;
}

inline EntrySizeResult entry_size_law_check(MatrixKind kind, const std::vector<int64_t>& n_list,
                                            bool correlated, SeededRng rng, int reps = 100) {
  if (n_list.size() < 3) throw std::invalid_argument("entry size law: need at least 3 sizes");
  if (reps < 1) throw std::invalid_argument("entry size law: need at least 1 rep");
  EntrySizeResult res;
  res.kind = kind;
  res.correlated = correlated;

  constexpr int64_t probe_cap = 256;  // rows sampled when a full pass is quadratic

  for (int64_t n : n_list) {
    double total = 0;
    int64_t count = 0;
    for (int rep = 0; rep < reps; ++rep) {
      SeededRng rr = rng.fork(uint64_t(rep)).fork(uint64_t(n));
      switch (kind) {
        case MatrixKind::gaussian: {
          SeededRng astream = rr.fork("A");
          std::vector<double> row(n), x(n);
          if (correlated) {
            // x = A^T y / sqrt(n), kept at unit coordinate scale
            std::vector<double> y(n);
            SeededRng yr = rr.fork("y");
            detail::fill_gaussian(y, yr);
            std::fill(x.begin(), x.end(), 0.0);
            for (int64_t i = 0; i < n; ++i) {
              detail::gaussian_row(row, astream, i);
              for (int64_t j = 0; j < n; ++j) x[j] += row[j] * y[i];
            }
            double inv = 1.0 / std::sqrt(double(n));
            for (auto& v : x) v *= inv;
          } else {
            SeededRng xr = rr.fork("x");
            detail::fill_gaussian(x, xr);
          }
          int64_t probe = std::min(n, probe_cap);
          for (int64_t i = 0; i < probe; ++i) {
            detail::gaussian_row(row, astream, i);
            double s = 0;
            for (int64_t j = 0; j < n; ++j) s += row[j] * x[j];
            total += std::abs(s);
            ++count;
          }
          break;
        }
        case MatrixKind::tensor_product: {
          constexpr int k = 3;
          std::vector<std::vector<double>> u(k, std::vector<double>(n)), v(k, std::vector<double>(n));
          for (int i = 0; i < k; ++i) {
            SeededRng ur = rr.fork(2 * i), vr = rr.fork(2 * i + 1);
            detail::fill_gaussian(u[i], ur);
            detail::fill_gaussian(v[i], vr);
          }
          std::vector<double> x;
          if (correlated) {
            x = v[0];
          } else {
            x.resize(n);
            SeededRng xr = rr.fork("x");
            detail::fill_gaussian(x, xr);
          }
          double c[k];
          for (int i = 0; i < k; ++i) {
            c[i] = 0;
            for (int64_t j = 0; j < n; ++j) c[i] += v[i][j] * x[j];
          }
          double inv = 1.0 / std::sqrt(double(k));
          for (int64_t a = 0; a < n; ++a) {
            double s = 0;
            for (int i = 0; i < k; ++i) s += u[i][a] * c[i];
            total += std::abs(s * inv);
            ++count;
          }
          break;
        }
        case MatrixKind::nonlinear_tensor_product: {
          std::vector<double> u1(n), u2(n), v1(n), v2(n), x;
          SeededRng r1 = rr.fork(1), r2 = rr.fork(2), r3 = rr.fork(3), r4 = rr.fork(4);
          detail::fill_gaussian(u1, r1);
          detail::fill_gaussian(u2, r2);
          detail::fill_gaussian(v1, r3);
          detail::fill_gaussian(v2, r4);
          if (correlated) {
            x = v1;
          } else {
            x.resize(n);
            SeededRng xr = rr.fork("x");
            detail::fill_gaussian(x, xr);
          }
          int64_t probe = std::min(n, probe_cap);
          for (int64_t a = 0; a < probe; ++a) {
            double s = 0;
            for (int64_t b = 0; b < n; ++b)
              s += detail::adam_like_entry(u1[a], u2[a], v1[b], v2[b]) * x[b];
            total += std::abs(s);
            ++count;
          }
          break;
        }
        case MatrixKind::vector: {
          std::vector<double> u(n), x;
          SeededRng ur = rr.fork(1);
          detail::fill_gaussian(u, ur);
          if (correlated) {
            x = u;
          } else {
            x.resize(n);
            SeededRng xr = rr.fork("x");
            detail::fill_gaussian(x, xr);
          }
          double s = 0;
          for (int64_t j = 0; j < n; ++j) s += u[j] * x[j];
          total += std::abs(s);
          ++count;
          break;
        }
      }
    }
    res.sizes.push_back({n, total / double(count)});
  }

  std::vector<std::pair<double, double>> pts;
  for (auto [n, s] : res.sizes) pts.push_back({double(n), s});
  res.fit = fit_slope(pts);
  return res;
}

}  // namespace mupar
