#pragma once
// Forward kernels with hand-written backward passes, sequenced on a small
// tape. The op set is fixed (no general autodiff); matmuls go through Eigen.
// Gradients always accumulate (+=) so shared parameters work.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mupar/tensor.hpp"

namespace mupar {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapCM = Eigen::Map<const EMat>;

inline MapM emap(Tensor& t, int64_t rows, int64_t cols) { return MapM(t.data(), rows, cols); }
inline MapCM emap(const Tensor& t, int64_t rows, int64_t cols) { return MapCM(t.data(), rows, cols); }
inline MapM emap2(Tensor& t) { return MapM(t.data(), t.dim(0), t.dim(1)); }
inline MapCM emap2(const Tensor& t) { return MapCM(t.data(), t.dim(0), t.dim(1)); }

struct Node {
  Tensor value;
  Tensor grad;  // allocated iff requires_grad
  bool requires_grad = false;
};
using NodeRef = std::shared_ptr<Node>;

class Tape {
public:
  // Leaf over existing storage (parameters): value/grad alias the caller's
  // tensors, so backward accumulates straight into the parameter grad.
  NodeRef leaf(Tensor value, Tensor grad) {
    auto n = std::make_shared<Node>();
    if (!value.same_shape(grad)) throw std::invalid_argument("leaf: value/grad shape mismatch");
    n->value = value;
    n->grad = grad;
    n->requires_grad = true;
    return n;
  }

  NodeRef constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = false;
    return n;
  }

  // ---- matmul: [m,k]·[k,n] -> [m,n] ----
  NodeRef matmul(const NodeRef& a, const NodeRef& b) {
    check_rank(a, 2, "matmul lhs");
    check_rank(b, 2, "matmul rhs");
    if (a->value.dim(1) != b->value.dim(0))
      throw std::invalid_argument("matmul: inner dims " + a->value.shape_str() + " x " + b->value.shape_str());
    auto out = fresh({a->value.dim(0), b->value.dim(1)}, a->requires_grad || b->requires_grad);
    emap2(out->value).noalias() = emap2(a->value) * emap2(b->value);
    if (out->requires_grad) {
      back_.push_back([a, b, out] {
        if (a->requires_grad) emap2(a->grad).noalias() += emap2(out->grad) * emap2(b->value).transpose();
        if (b->requires_grad) emap2(b->grad).noalias() += emap2(a->value).transpose() * emap2(out->grad);
      });
    }
    return out;
  }

  // ---- matmul_nt: [m,k]·[n,k]ᵀ -> [m,n]; the linear-layer product x·Wᵀ ----
  NodeRef matmul_nt(const NodeRef& a, const NodeRef& b) {
    check_rank(a, 2, "matmul_nt lhs");
    check_rank(b, 2, "matmul_nt rhs");
    if (a->value.dim(1) != b->value.dim(1))
      throw std::invalid_argument("matmul_nt: inner dims " + a->value.shape_str() + " x " + b->value.shape_str());
    auto out = fresh({a->value.dim(0), b->value.dim(0)}, a->requires_grad || b->requires_grad);
    emap2(out->value).noalias() = emap2(a->value) * emap2(b->value).transpose();
    if (out->requires_grad) {
      back_.push_back([a, b, out] {
        if (a->requires_grad) emap2(a->grad).noalias() += emap2(out->grad) * emap2(b->value);
        if (b->requires_grad) emap2(b->grad).noalias() += emap2(out->grad).transpose() * emap2(a->value);
      });
    }
    return out;
  }

  NodeRef scale(const NodeRef& a, double s) {
    if (s == 1.0) return a;
    auto out = fresh(a->value.shape(), a->requires_grad);
    const double* x = a->value.data();
    double* y = out->value.data();
    for (int64_t i = 0; i < a->value.size(); ++i) y[i] = s * x[i];
    if (out->requires_grad) {
      back_.push_back([a, out, s] {
        const double* gy = out->grad.data();
        double* gx = a->grad.data();
        for (int64_t i = 0; i < a->grad.size(); ++i) gx[i] += s * gy[i];
      });
    }
    return out;
  }

  NodeRef add(const NodeRef& a, const NodeRef& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
    auto out = fresh(a->value.shape(), a->requires_grad || b->requires_grad);
    const double* xa = a->value.data();
    const double* xb = b->value.data();
    double* y = out->value.data();
    for (int64_t i = 0; i < out->value.size(); ++i) y[i] = xa[i] + xb[i];
    if (out->requires_grad) {
      back_.push_back([a, b, out] {
        const double* gy = out->grad.data();
        if (a->requires_grad) {
          double* g = a->grad.data();
          for (int64_t i = 0; i < a->grad.size(); ++i) g[i] += gy[i];
        }
        if (b->requires_grad) {
          double* g = b->grad.data();
          for (int64_t i = 0; i < b->grad.size(); ++i) g[i] += gy[i];
        }
      });
    }
    return out;
  }

  // ---- bias_add: [m,n] + [n] broadcast over rows ----
  NodeRef bias_add(const NodeRef& a, const NodeRef& b) {
    check_rank(a, 2, "bias_add input");
    check_rank(b, 1, "bias_add bias");
    if (a->value.dim(1) != b->value.dim(0)) throw std::invalid_argument("bias_add: width mismatch");
    int64_t m = a->value.dim(0), n = a->value.dim(1);
    auto out = fresh({m, n}, a->requires_grad || b->requires_grad);
    const double* x = a->value.data();
    const double* bias = b->value.data();
    double* y = out->value.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] + bias[j];
    if (out->requires_grad) {
      back_.push_back([a, b, out, m, n] {
        const double* gy = out->grad.data();
        if (a->requires_grad) {
          double* g = a->grad.data();
          for (int64_t i = 0; i < m * n; ++i) g[i] += gy[i];
        }
        if (b->requires_grad) {
          double* g = b->grad.data();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) g[j] += gy[i * n + j];
        }
      });
    }
    return out;
  }

  NodeRef relu(const NodeRef& a) {
    auto out = fresh(a->value.shape(), a->requires_grad);
    const double* x = a->value.data();
    double* y = out->value.data();
    for (int64_t i = 0; i < a->value.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
    if (out->requires_grad) {
      back_.push_back([a, out] {
        const double* x = a->value.data();
        const double* gy = out->grad.data();
        double* gx = a->grad.data();
        for (int64_t i = 0; i < a->grad.size(); ++i)
          if (x[i] > 0) gx[i] += gy[i];
      });
    }
    return out;
  }

  NodeRef tanh_act(const NodeRef& a) {
    auto out = fresh(a->value.shape(), a->requires_grad);
    const double* x = a->value.data();
    double* y = out->value.data();
    for (int64_t i = 0; i < a->value.size(); ++i) y[i] = std::tanh(x[i]);
    if (out->requires_grad) {
      back_.push_back([a, out] {
        const double* y = out->value.data();
        const double* gy = out->grad.data();
        double* gx = a->grad.data();
        for (int64_t i = 0; i < a->grad.size(); ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
      });
    }
    return out;
  }

  // ---- layernorm over the last axis; eps fixed at 1e-5 and excluded from
  // all width-scaling rules ----
  NodeRef layernorm(const NodeRef& x, const NodeRef& gain, const NodeRef& bias) {
    check_rank(x, 2, "layernorm input");
    check_rank(gain, 1, "layernorm gain");
    check_rank(bias, 1, "layernorm bias");
    int64_t m = x->value.dim(0), n = x->value.dim(1);
    if (gain->value.dim(0) != n || bias->value.dim(0) != n)
      throw std::invalid_argument("layernorm: gain/bias width mismatch");
    constexpr double eps = 1e-5;
    auto out = fresh({m, n}, x->requires_grad || gain->requires_grad || bias->requires_grad);
    Tensor xhat({m, n});
    Tensor inv({m});
    const double* xp = x->value.data();
    const double* g = gain->value.data();
    const double* b = bias->value.data();
    double* y = out->value.data();
    for (int64_t i = 0; i < m; ++i) {
      const double* row = xp + i * n;
      double mu = 0;
      for (int64_t j = 0; j < n; ++j) mu += row[j];
      mu /= double(n);
      double var = 0;
      for (int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= double(n);
      double iv = 1.0 / std::sqrt(var + eps);
      inv[i] = iv;
      for (int64_t j = 0; j < n; ++j) {
        double xh = (row[j] - mu) * iv;
        xhat.at(i, j) = xh;
        y[i * n + j] = g[j] * xh + b[j];
      }
    }
    if (out->requires_grad) {
      back_.push_back([x, gain, bias, out, xhat, inv, m, n] {
        const double* gy = out->grad.data();
        const double* g = gain->value.data();
        for (int64_t i = 0; i < m; ++i) {
          const double* gyr = gy + i * n;
          const double* xh = xhat.data() + i * n;
          if (gain->requires_grad) {
            double* gg = gain->grad.data();
            for (int64_t j = 0; j < n; ++j) gg[j] += gyr[j] * xh[j];
          }
          if (bias->requires_grad) {
            double* gb = bias->grad.data();
            for (int64_t j = 0; j < n; ++j) gb[j] += gyr[j];
          }
          if (x->requires_grad) {
            double s1 = 0, s2 = 0;
            for (int64_t j = 0; j < n; ++j) {
              double gxh = gyr[j] * g[j];
              s1 += gxh;
              s2 += gxh * xh[j];
            }
            s1 /= double(n);
            s2 /= double(n);
            double* gx = x->grad.data() + i * n;
            double iv = inv[i];
            for (int64_t j = 0; j < n; ++j) {
              double gxh = gyr[j] * g[j];
              gx[j] += iv * (gxh - s1 - xh[j] * s2);
            }
          }
        }
      });
    }
    return out;
  }

  // ---- embedding_lookup: table [d,V] (fan_out × fan_in), ids -> [T,d] ----
  NodeRef embedding_lookup(const NodeRef& table, const std::vector<int32_t>& ids) {
    check_rank(table, 2, "embedding_lookup table");
    int64_t d = table->value.dim(0), V = table->value.dim(1);
    int64_t T = int64_t(ids.size());
    for (int32_t id : ids)
      if (id < 0 || id >= V) throw std::invalid_argument("embedding_lookup: id out of range");
    auto out = fresh({T, d}, table->requires_grad);
    const double* tp = table->value.data();
    double* y = out->value.data();
    for (int64_t t = 0; t < T; ++t)
      for (int64_t j = 0; j < d; ++j) y[t * d + j] = tp[j * V + ids[size_t(t)]];
    if (out->requires_grad) {
      back_.push_back([table, out, ids, d, V, T] {
        const double* gy = out->grad.data();
        double* gt = table->grad.data();
        for (int64_t t = 0; t < T; ++t)
          for (int64_t j = 0; j < d; ++j) gt[j * V + ids[size_t(t)]] += gy[t * d + j];
      });
    }
    return out;
  }

  // ---- add_position: x [B·T,d] + pos [d,C] column t = row index mod T ----
  NodeRef add_position(const NodeRef& x, const NodeRef& pos, int64_t seq_len) {
    check_rank(x, 2, "add_position input");
    check_rank(pos, 2, "add_position table");
    int64_t rows = x->value.dim(0), d = x->value.dim(1);
    int64_t C = pos->value.dim(1);
    if (pos->value.dim(0) != d) throw std::invalid_argument("add_position: model width mismatch");
    if (rows % seq_len != 0) throw std::invalid_argument("add_position: rows not divisible by seq_len");
    if (seq_len > C) throw std::invalid_argument("add_position: seq_len exceeds context");
    auto out = fresh({rows, d}, x->requires_grad || pos->requires_grad);
    const double* xp = x->value.data();
    const double* pp = pos->value.data();
    double* y = out->value.data();
    for (int64_t r = 0; r < rows; ++r) {
      int64_t t = r % seq_len;
      for (int64_t j = 0; j < d; ++j) y[r * d + j] = xp[r * d + j] + pp[j * C + t];
    }
    if (out->requires_grad) {
      back_.push_back([x, pos, out, rows, d, C, seq_len] {
        const double* gy = out->grad.data();
        if (x->requires_grad) {
          double* gx = x->grad.data();
          for (int64_t i = 0; i < rows * d; ++i) gx[i] += gy[i];
        }
        if (pos->requires_grad) {
          double* gp = pos->grad.data();
          for (int64_t r = 0; r < rows; ++r) {
            int64_t t = r % seq_len;
            for (int64_t j = 0; j < d; ++j) gp[j * C + t] += gy[r * d + j];
          }
        }
      });
    }
    return out;
  }

  NodeRef slice_cols(const NodeRef& a, int64_t c0, int64_t c1) {
    check_rank(a, 2, "slice_cols input");
    int64_t m = a->value.dim(0), n = a->value.dim(1);
    if (c0 < 0 || c1 > n || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    int64_t w = c1 - c0;
    auto out = fresh({m, w}, a->requires_grad);
    const double* x = a->value.data();
    double* y = out->value.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) y[i * w + j] = x[i * n + c0 + j];
    if (out->requires_grad) {
      back_.push_back([a, out, m, n, c0, w] {
        const double* gy = out->grad.data();
        double* gx = a->grad.data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < w; ++j) gx[i * n + c0 + j] += gy[i * w + j];
      });
    }
    return out;
  }

  NodeRef concat_cols(const std::vector<NodeRef>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int64_t m = parts[0]->value.dim(0);
    int64_t n = 0;
    bool rg = false;
    for (auto& p : parts) {
      check_rank(p, 2, "concat_cols part");
      if (p->value.dim(0) != m) throw std::invalid_argument("concat_cols: row mismatch");
      n += p->value.dim(1);
      rg = rg || p->requires_grad;
    }
    auto out = fresh({m, n}, rg);
    double* y = out->value.data();
    int64_t off = 0;
    for (auto& p : parts) {
      int64_t w = p->value.dim(1);
      const double* x = p->value.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j) y[i * n + off + j] = x[i * w + j];
      off += w;
    }
    if (rg) {
      back_.push_back([parts, out, m, n] {
        const double* gy = out->grad.data();
        int64_t off = 0;
        for (auto& p : parts) {
          int64_t w = p->value.dim(1);
          if (p->requires_grad) {
            double* gx = p->grad.data();
            for (int64_t i = 0; i < m; ++i)
              for (int64_t j = 0; j < w; ++j) gx[i * w + j] += gy[i * n + off + j];
          }
          off += w;
        }
      });
    }
    return out;
  }

  // ---- scaled_dot_attention over B sequences of length T packed in rows.
  // logits = logit_scale·q kᵀ, optional causal mask, softmax, weighted sum of
  // v. Pre-softmax valid logits can be captured for diagnostics. ----
  NodeRef scaled_dot_attention(const NodeRef& q, const NodeRef& k, const NodeRef& v, double logit_scale,
                               int64_t seq_len, bool causal = true, std::vector<double>* capture_logits = nullptr) {
    check_rank(q, 2, "attention q");
    check_rank(k, 2, "attention k");
    check_rank(v, 2, "attention v");
    int64_t rows = q->value.dim(0), dk = q->value.dim(1), dv = v->value.dim(1);
    if (k->value.dim(0) != rows || v->value.dim(0) != rows || k->value.dim(1) != dk)
      throw std::invalid_argument("attention: shape mismatch");
    if (rows % seq_len != 0) throw std::invalid_argument("attention: rows not divisible by seq_len");
    int64_t B = rows / seq_len, T = seq_len;
    bool rg = q->requires_grad || k->requires_grad || v->requires_grad;
    auto out = fresh({rows, dv}, rg);
    Tensor probs({B * T, T});
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    for (int64_t b = 0; b < B; ++b) {
      MapCM Qb(q->value.data() + b * T * dk, T, dk);
      MapCM Kb(k->value.data() + b * T * dk, T, dk);
      MapCM Vb(v->value.data() + b * T * dv, T, dv);
      EMat L = logit_scale * (Qb * Kb.transpose());
      if (causal)
        for (int64_t i = 0; i < T; ++i)
          for (int64_t j = i + 1; j < T; ++j) L(i, j) = ninf;
      if (capture_logits)
        for (int64_t i = 0; i < T; ++i)
          for (int64_t j = 0; j <= (causal ? i : T - 1); ++j) capture_logits->push_back(L(i, j));
      MapM Pb(probs.data() + b * T * T, T, T);
      for (int64_t i = 0; i < T; ++i) {
        double mx = L.row(i).maxCoeff();
        double sum = 0;
        for (int64_t j = 0; j < T; ++j) {
          double e = L(i, j) == ninf ? 0.0 : std::exp(L(i, j) - mx);
          Pb(i, j) = e;
          sum += e;
        }
        Pb.row(i) /= sum;
      }
      MapM Ob(out->value.data() + b * T * dv, T, dv);
      Ob.noalias() = Pb * Vb;
    }
    if (rg) {
      back_.push_back([q, k, v, out, probs, logit_scale, B, T, dk, dv] {
        for (int64_t b = 0; b < B; ++b) {
          MapCM Qb(q->value.data() + b * T * dk, T, dk);
          MapCM Kb(k->value.data() + b * T * dk, T, dk);
          MapCM Vb(v->value.data() + b * T * dv, T, dv);
          MapCM Pb(probs.data() + b * T * T, T, T);
          MapCM gO(out->grad.data() + b * T * dv, T, dv);
          EMat gP = gO * Vb.transpose();
          if (v->requires_grad) {
            MapM gV(v->grad.data() + b * T * dv, T, dv);
            gV.noalias() += Pb.transpose() * gO;
          }
          // softmax backward: gL = P ∘ (gP − rowsum(gP ∘ P))
          EMat gL(T, T);
          for (int64_t i = 0; i < T; ++i) {
            double dot = 0;
            for (int64_t j = 0; j < T; ++j) dot += gP(i, j) * Pb(i, j);
            for (int64_t j = 0; j < T; ++j) gL(i, j) = Pb(i, j) * (gP(i, j) - dot);
          }
          gL *= logit_scale;
          if (q->requires_grad) {
            MapM gQ(q->grad.data() + b * T * dk, T, dk);
            gQ.noalias() += gL * Kb;
          }
          if (k->requires_grad) {
            MapM gK(k->grad.data() + b * T * dk, T, dk);
            gK.noalias() += gL.transpose() * Qb;
          }
        }
      });
    }
    return out;
  }

  // ---- softmax_cross_entropy: mean NLL over rows; returns a scalar node ----
  NodeRef softmax_cross_entropy(const NodeRef& logits, const std::vector<int32_t>& targets) {
    check_rank(logits, 2, "softmax_cross_entropy logits");
    int64_t B = logits->value.dim(0), C = logits->value.dim(1);
    if (int64_t(targets.size()) != B) throw std::invalid_argument("softmax_cross_entropy: target count");
    for (int32_t t : targets)
      if (t < 0 || t >= C) throw std::invalid_argument("softmax_cross_entropy: target out of range");
    Tensor probs({B, C});
    const double* x = logits->value.data();
    double loss = 0;
    for (int64_t i = 0; i < B; ++i) {
      const double* row = x + i * C;
      double mx = row[0];
      for (int64_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
      double sum = 0;
      for (int64_t j = 0; j < C; ++j) {
        double e = std::exp(row[j] - mx);
        probs.at(i, j) = e;
        sum += e;
      }
      for (int64_t j = 0; j < C; ++j) probs.at(i, j) /= sum;
      loss += std::log(sum) + mx - row[targets[size_t(i)]];
    }
    loss /= double(B);
    auto out = fresh({1}, logits->requires_grad);
    out->value[0] = loss;
    if (out->requires_grad) {
      back_.push_back([logits, out, probs, targets, B, C] {
        double g = out->grad[0] / double(B);
        double* gx = logits->grad.data();
        const double* p = probs.data();
        for (int64_t i = 0; i < B; ++i) {
          for (int64_t j = 0; j < C; ++j) gx[i * C + j] += g * p[i * C + j];
          gx[i * C + targets[size_t(i)]] -= g;
        }
      });
    }
    return out;
  }

  NodeRef sum(const NodeRef& a) {
    auto out = fresh({1}, a->requires_grad);
    const double* x = a->value.data();
    double s = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) s += x[i];
    out->value[0] = s;
    if (out->requires_grad) {
      back_.push_back([a, out] {
        double g = out->grad[0];
        double* gx = a->grad.data();
        for (int64_t i = 0; i < a->grad.size(); ++i) gx[i] += g;
      });
    }
    return out;
  }

  // fixed-weight contraction to a scalar (gradcheck scalarizer)
  NodeRef weighted_sum(const NodeRef& a, const Tensor& w) {
    if (!a->value.same_shape(w)) throw std::invalid_argument("weighted_sum: shape mismatch");
    auto out = fresh({1}, a->requires_grad);
    const double* x = a->value.data();
    const double* wp = w.data();
    double s = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) s += x[i] * wp[i];
    out->value[0] = s;
    if (out->requires_grad) {
      back_.push_back([a, out, w] {
        double g = out->grad[0];
        double* gx = a->grad.data();
        const double* wp = w.data();
        for (int64_t i = 0; i < a->grad.size(); ++i) gx[i] += g * wp[i];
      });
    }
    return out;
  }

  // Seeds the root gradient with 1 and replays recorded ops in reverse.
  void backward(const NodeRef& root) {
    if (!root->requires_grad) throw std::invalid_argument("backward: root does not require grad");
    if (root->value.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    root->grad[0] += 1.0;
    for (auto it = back_.rbegin(); it != back_.rend(); ++it) (*it)();
  }

  size_t op_count() const { return back_.size(); }

private:
  NodeRef fresh(std::vector<int64_t> shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = Tensor(std::move(shape));
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad = Tensor(n->value.shape());
    return n;
  }

  static void check_rank(const NodeRef& n, int rank, const char* what) {
    if (n->value.rank() != rank)
      throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                  n->value.shape_str());
  }

  std::vector<std::function<void()>> back_;
};

}  // namespace mupar
