#pragma once
// Model builders: MLPs and small decoder-only transformers whose every
// parameter carries a width shape, a role, and a scaling triple. At the base
// shape every scheme reduces to the same network bit-for-bit.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mupar/abc.hpp"
#include "mupar/infshape.hpp"
#include "mupar/kernels.hpp"
#include "mupar/param.hpp"
#include "mupar/rng.hpp"

namespace mupar {

inline std::string default_lr_group(ParamRole role) {
  switch (role) {
    case ParamRole::InputWeight:
    case ParamRole::Bias: return "input";
    case ParamRole::HiddenWeight: return "hidden";
    case ParamRole::OutputWeight: return "output";
    case ParamRole::ScalarLike: return "scalar";
  }
  return "scalar";
}

// mult_const folds model-level multipliers (the alphas) into the table cell
inline ParamTensor make_param(std::string name, std::vector<int64_t> physical, InfShape ishape, Scheme scheme,
                              OptimKind opt, double master_var, double master_mean, double mult_const = 1.0) {
  ParamTensor p;
  p.name = std::move(name);
  p.value = Tensor(physical);
  p.grad = Tensor(std::move(physical));
  p.ishape = ishape;
  p.role = classify_role(ishape);
  p.triple = scheme_lookup(p.role, scheme, opt);
  p.triple.mult_expr.c *= mult_const;
  p.master_init_var = master_var;
  p.master_init_mean = master_mean;
  p.lr_group = default_lr_group(p.role);
  p.fwd_mult = effective_multiplier(p.triple, p.ishape);
  return p;
}

// ---------------------------------------------------------------------------
// MLP: depth hidden layers with biases, bias-free readout

struct MlpConfig {
  int64_t d_in = 32;
  int64_t d_out = 10;
  int64_t width = 64;
  int64_t base_width = 64;
  int depth = 2;  // hidden layers
  enum class Act { relu, tanh } activation = Act::relu;
  Scheme scheme = Scheme::MuPT3;
  bool output_zero_init = false;
  double init_std = 1.0;
  // > 0: width multipliers computed as if the model were this wide (the
  // physical width stays cfg.width); master variances stay tied to base_width
  int64_t sim_width = 0;
  // constant group rescale theta: multipliers x theta, raw init 1/theta, lr
  // compensated per optimizer; the trained function is unchanged
  double theta = 1.0;
};

namespace detail {
// base adjusted so size/base equals what the dim would have at the simulated
// width: every infinite base shrinks by (physical primary width / sim)
inline int64_t simulated_base(int64_t base, int64_t primary, int64_t sim, const char* what) {
  if (sim <= 0) return base;
  int64_t num = base * primary;
  if (num % sim != 0 || num / sim < 1)
    throw std::invalid_argument(std::string("simulated width must divide base*") + what);
  return num / sim;
}

inline void apply_theta(std::vector<ParamTensor>& params, double theta, OptimKind opt) {
  if (theta == 1.0) return;
  if (!(theta > 0) || !std::isfinite(theta))
    throw std::invalid_argument("theta must be positive and finite");
  ScaleExpr th{theta, Rational{0, 1}, Rational{0, 1}};
  for (auto& p : params) {
    p.triple = rescale_theta(p.triple, th, opt);
    p.fwd_mult = effective_multiplier(p.triple, p.ishape);
  }
}
}  // namespace detail

inline Model build_mlp(const MlpConfig& cfg, OptimKind opt, SeededRng rng) {
  if (cfg.depth < 1 || cfg.width < 1 || cfg.base_width < 1 || cfg.d_in < 1 || cfg.d_out < 1)
    throw std::invalid_argument("build_mlp: all sizes must be positive");
  Model m;
  m.d_in = cfg.d_in;
  m.d_out = cfg.d_out;

  Dim w = Dim::inf(cfg.width,
                   detail::simulated_base(cfg.base_width, cfg.width, cfg.sim_width, "width"));
  double s2 = cfg.init_std * cfg.init_std;

  m.params.push_back(make_param("w1", {cfg.width, cfg.d_in}, InfShape::matrix(w, Dim::fin(cfg.d_in)),
                                cfg.scheme, opt, s2 / double(cfg.d_in), 0.0));
  m.params.push_back(make_param("b1", {cfg.width}, InfShape::vec(w), cfg.scheme, opt, 0.0, 0.0));
  for (int l = 2; l <= cfg.depth; ++l) {
    m.params.push_back(make_param("w" + std::to_string(l), {cfg.width, cfg.width}, InfShape::matrix(w, w),
                                  cfg.scheme, opt, s2 / double(cfg.base_width), 0.0));
    m.params.push_back(make_param("b" + std::to_string(l), {cfg.width}, InfShape::vec(w), cfg.scheme, opt,
                                  0.0, 0.0));
  }
  m.params.push_back(make_param("wout", {cfg.d_out, cfg.width}, InfShape::matrix(Dim::fin(cfg.d_out), w),
                                cfg.scheme, opt,
                                cfg.output_zero_init ? 0.0 : s2 / double(cfg.base_width), 0.0));

  detail::apply_theta(m.params, cfg.theta, opt);
  for (auto& p : m.params) init_param(p, rng);

  std::vector<double> mults;
  for (auto& p : m.params) mults.push_back(p.fwd_mult);
  const int depth = cfg.depth;
  const auto act = cfg.activation;

  m.graph = [depth, act, mults](Tape& t, std::vector<NodeRef>& lv, const Batch& batch, Capture* cap) {
    if (!batch.x.defined() || batch.x.rank() != 2) throw std::invalid_argument("mlp forward: batch.x required");
    NodeRef h = t.constant(batch.x);
    for (int l = 1; l <= depth; ++l) {
      size_t wi = size_t(2 * (l - 1)), bi = wi + 1;
      auto z = t.bias_add(t.scale(t.matmul_nt(h, lv[wi]), mults[wi]), t.scale(lv[bi], mults[bi]));
      if (cap) cap->add("z" + std::to_string(l), z->value);
      h = act == MlpConfig::Act::relu ? t.relu(z) : t.tanh_act(z);
    }
    size_t oi = lv.size() - 1;
    auto logits = t.scale(t.matmul_nt(h, lv[oi]), mults[oi]);
    if (cap) cap->add("logits", logits->value);
    return t.softmax_cross_entropy(logits, batch.targets);
  };
  return m;
}

// ---------------------------------------------------------------------------
// Transformer

// attention logits scale with 1/d_head (times the restored base scale) so
// they stay bounded as heads widen; at the base shape this is 1/sqrt(d_head)
inline double attention_logit_scale(int64_t d_head, int64_t d_head_base, double alpha_attn) {
  return alpha_attn * std::sqrt(double(d_head_base)) / double(d_head);
}

inline double attention_logit(const Tensor& q, const Tensor& k, int64_t d_head, int64_t d_head_base,
                              double alpha_attn) {
  if (q.size() != d_head || k.size() != d_head) throw std::invalid_argument("attention_logit: length mismatch");
  double dot = 0;
  for (int64_t i = 0; i < d_head; ++i) dot += q[i] * k[i];
  return attention_logit_scale(d_head, d_head_base, alpha_attn) * dot;
}

struct TransformerConfig {
  int64_t d_model = 64;
  int64_t d_model_base = 64;
  int64_t d_ffn = 256;
  int64_t d_ffn_base = 256;
  int64_t d_head = 16;
  int64_t d_head_base = 16;
  int64_t n_head = 4;
  int depth = 2;  // blocks
  int64_t vocab = 64;
  int64_t context = 64;
  enum class LnPos { pre, post } ln_position = LnPos::pre;
  Scheme scheme = Scheme::MuPT3;
  double alpha_output = 1.0;
  double alpha_attn = 1.0;
  double alpha_emb = 1.0;
  bool output_zero_init = true;
  bool query_zero_init = true;
  bool tie_embeddings = false;
  double init_std = 1.0;
  // > 0: multipliers as if d_model (and d_ffn in proportion) were this wide;
  // head size is controlled by d_head/d_head_base and is left alone
  int64_t sim_width = 0;
  // constant group rescale, as in MlpConfig
  double theta = 1.0;
};

namespace detail {
struct BlockIdx {
  size_t ln1g, ln1b, wq, wk, wv, wo, ln2g, ln2b, w1, w2;
};
}  // namespace detail

inline Model build_transformer(const TransformerConfig& cfg, OptimKind opt, SeededRng rng) {
  if (cfg.depth < 1 || cfg.vocab < 2 || cfg.context < 1 || cfg.n_head < 1)
    throw std::invalid_argument("build_transformer: bad sizes");
  if (cfg.d_model < 1 || cfg.d_ffn < 1 || cfg.d_head < 1)
    throw std::invalid_argument("build_transformer: bad widths");
  if (cfg.tie_embeddings && !(cfg.scheme == Scheme::MuPT8 || cfg.scheme == Scheme::MuPT9 || cfg.scheme == Scheme::SP))
    throw std::invalid_argument("build_transformer: tied embeddings need a width-consistent "
                                "input/output rule (sp, mup-t8 or mup-t9)");

  Model m;
  m.vocab = cfg.vocab;
  m.seq_len = cfg.context;

  Dim dm = Dim::inf(cfg.d_model,
                    detail::simulated_base(cfg.d_model_base, cfg.d_model, cfg.sim_width, "d_model"));
  Dim df = Dim::inf(cfg.d_ffn,
                    detail::simulated_base(cfg.d_ffn_base, cfg.d_model, cfg.sim_width, "d_model"));
  Dim dh = Dim::inf(cfg.n_head * cfg.d_head, cfg.n_head * cfg.d_head_base);
  double s2 = cfg.init_std * cfg.init_std;
  int64_t dqkv = cfg.n_head * cfg.d_head;

  auto push = [&](ParamTensor p) {
    m.params.push_back(std::move(p));
    return m.params.size() - 1;
  };

  size_t wte = push(make_param("wte", {cfg.d_model, cfg.vocab}, InfShape::matrix(dm, Dim::fin(cfg.vocab)),
                               cfg.scheme, opt, s2 * 1.0, 0.0, cfg.alpha_emb));
  size_t wpe = push(make_param("wpe", {cfg.d_model, cfg.context}, InfShape::matrix(dm, Dim::fin(cfg.context)),
                               cfg.scheme, opt, s2 * 1.0, 0.0, cfg.alpha_emb));

  std::vector<detail::BlockIdx> blocks;
  for (int i = 0; i < cfg.depth; ++i) {
    std::string pre = "blk" + std::to_string(i) + ".";
    detail::BlockIdx b;
    b.ln1g = push(make_param(pre + "ln1.g", {cfg.d_model}, InfShape::vec(dm), cfg.scheme, opt, 0.0, 1.0));
    b.ln1b = push(make_param(pre + "ln1.b", {cfg.d_model}, InfShape::vec(dm), cfg.scheme, opt, 0.0, 0.0));
    b.wq = push(make_param(pre + "attn.wq", {dqkv, cfg.d_model}, InfShape::matrix(dh, dm), cfg.scheme, opt,
                           cfg.query_zero_init ? 0.0 : s2 / double(cfg.d_model_base), 0.0));
    b.wk = push(make_param(pre + "attn.wk", {dqkv, cfg.d_model}, InfShape::matrix(dh, dm), cfg.scheme, opt,
                           s2 / double(cfg.d_model_base), 0.0));
    b.wv = push(make_param(pre + "attn.wv", {dqkv, cfg.d_model}, InfShape::matrix(dh, dm), cfg.scheme, opt,
                           s2 / double(cfg.d_model_base), 0.0));
    b.wo = push(make_param(pre + "attn.wo", {cfg.d_model, dqkv}, InfShape::matrix(dm, dh), cfg.scheme, opt,
                           s2 / double(cfg.n_head * cfg.d_head_base), 0.0));
    b.ln2g = push(make_param(pre + "ln2.g", {cfg.d_model}, InfShape::vec(dm), cfg.scheme, opt, 0.0, 1.0));
    b.ln2b = push(make_param(pre + "ln2.b", {cfg.d_model}, InfShape::vec(dm), cfg.scheme, opt, 0.0, 0.0));
    b.w1 = push(make_param(pre + "mlp.w1", {cfg.d_ffn, cfg.d_model}, InfShape::matrix(df, dm), cfg.scheme,
                           opt, s2 / double(cfg.d_model_base), 0.0));
    b.w2 = push(make_param(pre + "mlp.w2", {cfg.d_model, cfg.d_ffn}, InfShape::matrix(dm, df), cfg.scheme,
                           opt, s2 / double(cfg.d_ffn_base), 0.0));
    blocks.push_back(b);
  }

  bool pre_ln = cfg.ln_position == TransformerConfig::LnPos::pre;
  size_t lnfg = 0, lnfb = 0;
  if (pre_ln) {
    lnfg = push(make_param("lnf.g", {cfg.d_model}, InfShape::vec(dm), cfg.scheme, opt, 0.0, 1.0));
    lnfb = push(make_param("lnf.b", {cfg.d_model}, InfShape::vec(dm), cfg.scheme, opt, 0.0, 0.0));
  }

  // unembedding always evaluates the output column on [vocab × d_model]
  InfShape unemb_shape = InfShape::matrix(Dim::fin(cfg.vocab), dm);
  AbcTriple unemb_triple = scheme_lookup(ParamRole::OutputWeight, cfg.scheme, opt);
  unemb_triple.mult_expr.c *= cfg.alpha_output;
  double unemb_mult = effective_multiplier(unemb_triple, unemb_shape);

  size_t unemb = size_t(-1);
  if (cfg.tie_embeddings) {
    // the shared tensor keeps its embedding role; the learning rate must not
    // depend on which side you compute it from
    double lr_in = effective_lr(m.params[wte].triple, m.params[wte].ishape, 1.0);
    double lr_out = effective_lr(unemb_triple, unemb_shape, 1.0);
    if (lr_in != lr_out) throw std::logic_error("build_transformer: tied-embedding LR mismatch");
  } else {
    ParamTensor p;
    p.name = "unemb";
    p.value = Tensor({cfg.d_model, cfg.vocab});
    p.grad = Tensor({cfg.d_model, cfg.vocab});
    p.ishape = unemb_shape;
    p.role = ParamRole::OutputWeight;
    p.triple = unemb_triple;
    p.master_init_var = cfg.output_zero_init ? 0.0 : s2 / double(cfg.d_model_base);
    p.master_init_mean = 0.0;
    p.lr_group = "output";
    p.fwd_mult = unemb_mult;
    unemb = push(std::move(p));
  }

  detail::apply_theta(m.params, cfg.theta, opt);
  if (cfg.theta != 1.0) {
    if (cfg.tie_embeddings) {
      unemb_triple = rescale_theta(unemb_triple, ScaleExpr{cfg.theta, Rational{0, 1}, Rational{0, 1}}, opt);
      unemb_mult = effective_multiplier(unemb_triple, unemb_shape);
    } else {
      unemb_mult = m.params[unemb].fwd_mult;
    }
  }

  for (auto& p : m.params) init_param(p, rng);

  std::vector<double> mults;
  for (auto& p : m.params) mults.push_back(p.fwd_mult);
  double logit_scale =
      attention_logit_scale(cfg.d_head, is_mup(cfg.scheme) ? cfg.d_head_base : cfg.d_head, cfg.alpha_attn);
  int64_t n_head = cfg.n_head, d_head = cfg.d_head;

  m.graph = [blocks, mults, wte, wpe, lnfg, lnfb, unemb, unemb_mult, logit_scale, n_head, d_head,
             pre_ln](Tape& t, std::vector<NodeRef>& lv, const Batch& batch, Capture* cap) {
    if (batch.tokens.empty()) throw std::invalid_argument("transformer forward: batch.tokens required");
    int64_t T = batch.seq_len > 0 ? batch.seq_len : int64_t(batch.tokens.size());
    auto lin = [&](const NodeRef& x, size_t i) { return t.scale(t.matmul_nt(x, lv[i]), mults[i]); };
    auto ln = [&](const NodeRef& x, size_t gi, size_t bi) {
      return t.layernorm(x, t.scale(lv[gi], mults[gi]), t.scale(lv[bi], mults[bi]));
    };

    auto emb = t.scale(t.embedding_lookup(lv[wte], batch.tokens), mults[wte]);
    if (cap) cap->add("word_embedding", emb->value);
    auto h = t.add_position(emb, t.scale(lv[wpe], mults[wpe]), T);

    for (size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      auto a = pre_ln ? ln(h, b.ln1g, b.ln1b) : h;
      auto q = lin(a, b.wq), k = lin(a, b.wk), v = lin(a, b.wv);
      std::vector<double> logit_cap;
      std::vector<NodeRef> heads;
      for (int64_t hd = 0; hd < n_head; ++hd) {
        auto qh = t.slice_cols(q, hd * d_head, (hd + 1) * d_head);
        auto kh = t.slice_cols(k, hd * d_head, (hd + 1) * d_head);
        auto vh = t.slice_cols(v, hd * d_head, (hd + 1) * d_head);
        heads.push_back(t.scaled_dot_attention(qh, kh, vh, logit_scale, T, true, cap ? &logit_cap : nullptr));
      }
      if (cap) cap->add("attn_logits_L" + std::to_string(i), std::move(logit_cap));
      auto ao = lin(n_head == 1 ? heads[0] : t.concat_cols(heads), b.wo);
      h = t.add(h, ao);
      if (!pre_ln) h = ln(h, b.ln1g, b.ln1b);
      auto a2 = pre_ln ? ln(h, b.ln2g, b.ln2b) : h;
      auto mo = lin(t.relu(lin(a2, b.w1)), b.w2);
      h = t.add(h, mo);
      if (!pre_ln) h = ln(h, b.ln2g, b.ln2b);
    }

    if (pre_ln) h = ln(h, lnfg, lnfb);
    auto unemb_leaf = unemb == size_t(-1) ? lv[wte] : lv[unemb];
    auto logits = t.scale(t.matmul(h, unemb_leaf), unemb_mult);
    if (cap) cap->add("logits", logits->value);
    return t.softmax_cross_entropy(logits, batch.targets);
  };
  return m;
}

}  // namespace mupar
