#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mupar/models.hpp"
#include "mupar/optim.hpp"

using namespace mupar;

namespace {

Batch mlp_batch(int64_t B, int64_t d_in, int64_t d_out, uint64_t seed) {
  Batch b;
  SeededRng r(seed, 900);
  b.x = Tensor({B, d_in});
  for (int64_t i = 0; i < b.x.size(); ++i) b.x[i] = r.gaussian();
  for (int64_t i = 0; i < B; ++i) b.targets.push_back(int32_t(r.uniform_int(uint64_t(d_out))));
  return b;
}

Batch lm_batch(int64_t B, int64_t T, int64_t vocab, uint64_t seed, bool periodic = false) {
  Batch b;
  b.seq_len = T;
  SeededRng r(seed, 901);
  for (int64_t i = 0; i < B * T; ++i) {
    int32_t tok = periodic ? int32_t(i % vocab) : int32_t(r.uniform_int(uint64_t(vocab)));
    b.tokens.push_back(tok);
    b.targets.push_back(periodic ? int32_t((i + 1) % vocab) : int32_t(r.uniform_int(uint64_t(vocab))));
  }
  return b;
}

std::vector<double> mlp_trajectory(const MlpConfig& cfg, OptimKind ok, int steps, uint64_t seed) {
  auto model = build_mlp(cfg, ok, SeededRng(seed, 0));
  auto batch = mlp_batch(8, cfg.d_in, cfg.d_out, seed);
  SgdConfig sgd{0.2, 0.5, 0.0, {}};
  AdamConfig adam;
  adam.master_lr = 0.02;
  Schedule sched;
  std::vector<double> losses;
  for (int t = 0; t < steps; ++t) {
    zero_grads(model);
    auto fr = forward_pass(model, batch);
    losses.push_back(fr.loss_value);
    fr.tape.backward(fr.loss);
    if (ok == OptimKind::SGD)
      sgd_step(model, sgd, sched, t);
    else
      adam_step(model, adam, sched, t);
  }
  return losses;
}

std::vector<double> tf_trajectory(const TransformerConfig& cfg, OptimKind ok, int steps, uint64_t seed) {
  auto model = build_transformer(cfg, ok, SeededRng(seed, 0));
  auto batch = lm_batch(4, 8, cfg.vocab, seed);
  SgdConfig sgd{0.1, 0.0, 0.0, {}};
  AdamConfig adam;
  adam.master_lr = 0.01;
  Schedule sched;
  std::vector<double> losses;
  for (int t = 0; t < steps; ++t) {
    zero_grads(model);
    auto fr = forward_pass(model, batch);
    losses.push_back(fr.loss_value);
    fr.tape.backward(fr.loss);
    if (ok == OptimKind::SGD)
      sgd_step(model, sgd, sched, t);
    else
      adam_step(model, adam, sched, t);
  }
  return losses;
}

void require_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    INFO("step " << i << ": " << a[i] << " vs " << b[i]);
    REQUIRE(std::abs(a[i] - b[i]) <= tol * std::max({1.0, std::abs(a[i]), std::abs(b[i])}));
  }
}

double sample_var(const Tensor& t) {
  double s = 0, s2 = 0;
  for (int64_t i = 0; i < t.size(); ++i) {
    s += t[i];
    s2 += t[i] * t[i];
  }
  double m = s / double(t.size());
  return s2 / double(t.size()) - m * m;
}

TransformerConfig small_tf(Scheme scheme, int64_t mult = 1) {
  TransformerConfig cfg;
  cfg.d_model = 16 * mult;
  cfg.d_model_base = 16;
  cfg.d_ffn = 32 * mult;
  cfg.d_ffn_base = 32;
  cfg.d_head = 4 * mult;
  cfg.d_head_base = 4;
  cfg.n_head = 2;
  cfg.depth = 2;
  cfg.vocab = 13;
  cfg.context = 8;
  cfg.scheme = scheme;
  return cfg;
}

}  // namespace

TEST_CASE("mlp structure and roles") {
  MlpConfig cfg;
  cfg.d_in = 8;
  cfg.d_out = 4;
  cfg.width = 32;
  cfg.base_width = 16;
  cfg.depth = 3;
  auto m = build_mlp(cfg, OptimKind::SGD, SeededRng(1, 0));
  REQUIRE(m.params.size() == 7);
  REQUIRE(m.find("w1")->role == ParamRole::InputWeight);
  REQUIRE(m.find("b1")->role == ParamRole::Bias);
  REQUIRE(m.find("w2")->role == ParamRole::HiddenWeight);
  REQUIRE(m.find("w3")->role == ParamRole::HiddenWeight);
  REQUIRE(m.find("wout")->role == ParamRole::OutputWeight);
  REQUIRE(m.find("w2")->value.dim(0) == 32);
  REQUIRE(m.find("wout")->value.dim(0) == 4);
  REQUIRE(m.find("w1")->lr_group == "input");
  REQUIRE(m.find("b2")->lr_group == "input");
  REQUIRE(m.find("wout")->lr_group == "output");
  REQUIRE_THROWS_AS(build_mlp(MlpConfig{8, 4, 32, 16, 0}, OptimKind::SGD, SeededRng(1, 0)),
                    std::invalid_argument);
}

TEST_CASE("mlp init variances follow the width rules") {
  MlpConfig cfg;
  cfg.d_in = 64;
  cfg.d_out = 10;
  cfg.width = 1024;
  cfg.base_width = 256;
  cfg.depth = 2;
  cfg.scheme = Scheme::MuPT3;
  auto m = build_mlp(cfg, OptimKind::SGD, SeededRng(7, 0));
  double ratio = 4.0;

  REQUIRE(sample_var(m.find("w1")->value) == Catch::Approx(1.0 / 64).epsilon(0.1));
  REQUIRE(sample_var(m.find("w2")->value) == Catch::Approx(1.0 / 1024).epsilon(0.1));
  // readout shrinks by an extra width ratio
  REQUIRE(sample_var(m.find("wout")->value) == Catch::Approx(1.0 / (1024 * ratio)).epsilon(0.15));
  for (int64_t i = 0; i < 1024; ++i) REQUIRE(m.find("b1")->value[i] == 0.0);

  // per-layer learning rates of the main table under SGD
  REQUIRE(effective_lr(m.find("w1")->triple, m.find("w1")->ishape, 1.0) == ratio);
  REQUIRE(effective_lr(m.find("w2")->triple, m.find("w2")->ishape, 1.0) == 1.0);
  REQUIRE(effective_lr(m.find("wout")->triple, m.find("wout")->ishape, 1.0) == 1.0 / ratio);

  cfg.output_zero_init = true;
  auto z = build_mlp(cfg, OptimKind::SGD, SeededRng(7, 0));
  for (int64_t i = 0; i < z.find("wout")->value.size(); ++i) REQUIRE(z.find("wout")->value[i] == 0.0);
}

TEST_CASE("same build is bit-identical and schemes coincide at base shape") {
  MlpConfig cfg;
  cfg.d_in = 8;
  cfg.d_out = 4;
  cfg.width = 24;
  cfg.base_width = 24;
  cfg.depth = 2;

  for (auto ok : {OptimKind::SGD, OptimKind::Adam}) {
    cfg.scheme = Scheme::SP;
    auto ref = mlp_trajectory(cfg, ok, 10, 42);
    auto again = mlp_trajectory(cfg, ok, 10, 42);
    require_close(ref, again, 0.0);
    for (auto s : {Scheme::NTP, Scheme::MuPT3, Scheme::MuPT8, Scheme::MuPT9}) {
      cfg.scheme = s;
      require_close(mlp_trajectory(cfg, ok, 10, 42), ref, 1e-10);
    }
  }
}

TEST_CASE("transformer schemes coincide at base shape") {
  auto ref = tf_trajectory(small_tf(Scheme::SP), OptimKind::Adam, 10, 5);
  for (auto s : {Scheme::NTP, Scheme::MuPT3, Scheme::MuPT8, Scheme::MuPT9})
    require_close(tf_trajectory(small_tf(s), OptimKind::Adam, 10, 5), ref, 1e-10);
}

TEST_CASE("table variants share trajectories away from base") {
  SECTION("mlp") {
    MlpConfig cfg;
    cfg.d_in = 8;
    cfg.d_out = 4;
    cfg.width = 64;
    cfg.base_width = 16;
    cfg.depth = 2;
    for (auto ok : {OptimKind::SGD, OptimKind::Adam}) {
      cfg.scheme = Scheme::MuPT3;
      auto t3 = mlp_trajectory(cfg, ok, 20, 9);
      cfg.scheme = Scheme::MuPT8;
      require_close(mlp_trajectory(cfg, ok, 20, 9), t3, 1e-8);
      cfg.scheme = Scheme::MuPT9;
      require_close(mlp_trajectory(cfg, ok, 20, 9), t3, 1e-8);
    }
  }
  SECTION("transformer") {
    for (auto ok : {OptimKind::SGD, OptimKind::Adam}) {
      auto t3 = tf_trajectory(small_tf(Scheme::MuPT3, 4), ok, 20, 11);
      require_close(tf_trajectory(small_tf(Scheme::MuPT8, 4), ok, 20, 11), t3, 1e-8);
      require_close(tf_trajectory(small_tf(Scheme::MuPT9, 4), ok, 20, 11), t3, 1e-8);
    }
  }
}

TEST_CASE("tied embeddings: validity and equivalence") {
  auto tied = [](Scheme s, int64_t mult) {
    auto cfg = small_tf(s, mult);
    cfg.tie_embeddings = true;
    return cfg;
  };

  REQUIRE_THROWS_AS(build_transformer(tied(Scheme::MuPT3, 1), OptimKind::Adam, SeededRng(1, 0)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(build_transformer(tied(Scheme::NTP, 1), OptimKind::Adam, SeededRng(1, 0)),
                    std::invalid_argument);

  auto m8 = build_transformer(tied(Scheme::MuPT8, 2), OptimKind::Adam, SeededRng(1, 0));
  REQUIRE(m8.find("unemb") == nullptr);
  REQUIRE(m8.find("wte")->role == ParamRole::InputWeight);

  // shared tensor gets gradient from both uses
  auto batch = lm_batch(2, 8, 13, 3);
  zero_grads(m8);
  auto fr = forward_pass(m8, batch);
  fr.tape.backward(fr.loss);
  double gnorm = 0;
  for (int64_t i = 0; i < m8.find("wte")->grad.size(); ++i)
    gnorm += std::abs(m8.find("wte")->grad[i]);
  REQUIRE(gnorm > 0);

  for (auto ok : {OptimKind::SGD, OptimKind::Adam}) {
    auto t8 = tf_trajectory(tied(Scheme::MuPT8, 4), ok, 20, 21);
    require_close(tf_trajectory(tied(Scheme::MuPT9, 4), ok, 20, 21), t8, 1e-8);
  }
  auto sp_base = tf_trajectory(tied(Scheme::SP, 1), OptimKind::Adam, 10, 22);
  require_close(tf_trajectory(tied(Scheme::MuPT8, 1), OptimKind::Adam, 10, 22), sp_base, 1e-10);
}

TEST_CASE("zero output init gives the uniform loss") {
  auto cfg = small_tf(Scheme::MuPT3);
  cfg.output_zero_init = true;
  auto m = build_transformer(cfg, OptimKind::Adam, SeededRng(2, 0));
  auto batch = lm_batch(2, 8, cfg.vocab, 4);
  REQUIRE(forward_loss(m, batch) == Catch::Approx(std::log(double(cfg.vocab))).margin(1e-12));
}

TEST_CASE("query zero init nulls the initial attention logits") {
  auto cfg = small_tf(Scheme::MuPT9, 2);
  cfg.query_zero_init = true;
  auto m = build_transformer(cfg, OptimKind::Adam, SeededRng(3, 0));
  auto batch = lm_batch(2, 8, cfg.vocab, 5);
  Capture cap;
  forward_loss(m, batch, &cap);
  for (int i = 0; i < cfg.depth; ++i) {
    auto* v = cap.find("attn_logits_L" + std::to_string(i));
    REQUIRE(v != nullptr);
    REQUIRE_FALSE(v->empty());
    for (double x : *v) REQUIRE(x == 0.0);
  }
  REQUIRE(cap.find("word_embedding") != nullptr);
  REQUIRE(cap.find("logits") != nullptr);
}

TEST_CASE("layernorm gains carry unit effective value at init") {
  auto cfg = small_tf(Scheme::MuPT9, 4);
  auto m = build_transformer(cfg, OptimKind::Adam, SeededRng(4, 0));
  auto* g = m.find("blk0.ln1.g");
  double width_mult = 4.0;
  // stored gain divides out the sqrt(width) forward multiplier
  for (int64_t i = 0; i < g->value.size(); ++i)
    REQUIRE(g->value[i] == Catch::Approx(1.0 / std::sqrt(width_mult)).margin(1e-15));
  REQUIRE(g->fwd_mult == Catch::Approx(std::sqrt(width_mult)).margin(1e-15));

  auto sp = build_transformer(small_tf(Scheme::SP, 4), OptimKind::Adam, SeededRng(4, 0));
  auto* gsp = sp.find("blk0.ln1.g");
  for (int64_t i = 0; i < gsp->value.size(); ++i) REQUIRE(gsp->value[i] == 1.0);
  for (int64_t i = 0; i < sp.find("blk0.ln1.b")->value.size(); ++i)
    REQUIRE(sp.find("blk0.ln1.b")->value[i] == 0.0);
}

TEST_CASE("attention logit helper") {
  SECTION("base shape reduces to inverse sqrt scaling") {
    int64_t d = 16;
    REQUIRE(attention_logit_scale(d, d, 1.0) == Catch::Approx(1.0 / std::sqrt(double(d))).margin(1e-15));
  }
  SECTION("zero query gives zero logit at any width") {
    Tensor q({64}), k = Tensor::full({64}, 1.3);
    REQUIRE(attention_logit(q, k, 64, 4, 1.0) == 0.0);
  }
  SECTION("correlated logits stay near sqrt of the base width") {
    SeededRng r(12, 0);
    int64_t d = 256, base = 4;
    double mean = 0;
    int reps = 2000;
    for (int i = 0; i < reps; ++i) {
      Tensor q({d});
      for (int64_t j = 0; j < d; ++j) q[j] = r.gaussian();
      mean += attention_logit(q, q, d, base, 1.0);
    }
    mean /= reps;
    REQUIRE(mean == Catch::Approx(std::sqrt(double(base))).epsilon(0.05));
  }
}

TEST_CASE("losses shrink on a memorizable stream") {
  SECTION("mlp") {
    MlpConfig cfg;
    cfg.d_in = 8;
    cfg.d_out = 4;
    cfg.width = 32;
    cfg.base_width = 32;
    auto m = build_mlp(cfg, OptimKind::Adam, SeededRng(6, 0));
    auto batch = mlp_batch(16, 8, 4, 8);
    AdamConfig adam;
    adam.master_lr = 0.01;
    Schedule sched;
    double first = 0, last = 0;
    for (int t = 0; t < 50; ++t) {
      zero_grads(m);
      auto fr = forward_pass(m, batch);
      if (t == 0) first = fr.loss_value;
      last = fr.loss_value;
      fr.tape.backward(fr.loss);
      adam_step(m, adam, sched, t);
    }
    REQUIRE(last < 0.5 * first);
  }
  SECTION("transformer") {
    auto cfg = small_tf(Scheme::MuPT3);
    auto m = build_transformer(cfg, OptimKind::Adam, SeededRng(6, 0));
    auto batch = lm_batch(2, 8, cfg.vocab, 9, true);
    AdamConfig adam;
    adam.master_lr = 0.01;
    Schedule sched;
    double first = 0, last = 0;
    for (int t = 0; t < 50; ++t) {
      zero_grads(m);
      auto fr = forward_pass(m, batch);
      if (t == 0) first = fr.loss_value;
      last = fr.loss_value;
      fr.tape.backward(fr.loss);
      adam_step(m, adam, sched, t);
    }
    REQUIRE(last < first);
  }
}

TEST_CASE("model gradients match finite differences end to end") {
  auto check_model = [](Model& m, const Batch& batch) {
    zero_grads(m);
    auto fr = forward_pass(m, batch);
    fr.tape.backward(fr.loss);
    SeededRng pick(77, 0);
    for (auto& p : m.params) {
      for (int probe = 0; probe < 3; ++probe) {
        int64_t i = int64_t(pick.uniform_int(uint64_t(p.value.size())));
        double saved = p.value[i];
        double h = 1e-5;
        p.value[i] = saved + h;
        double fp = forward_loss(m, batch);
        p.value[i] = saved - h;
        double fm = forward_loss(m, batch);
        p.value[i] = saved;
        double num = (fp - fm) / (2 * h);
        double ana = p.grad[i];
        INFO(p.name << " entry " << i);
        REQUIRE(std::abs(ana - num) <= 2e-5 * std::max({1.0, std::abs(ana), std::abs(num)}));
      }
    }
  };

  MlpConfig mc;
  mc.d_in = 6;
  mc.d_out = 3;
  mc.width = 16;
  mc.base_width = 4;
  mc.scheme = Scheme::MuPT9;
  mc.activation = MlpConfig::Act::tanh;
  auto mlp = build_mlp(mc, OptimKind::SGD, SeededRng(13, 0));
  auto mb = mlp_batch(4, 6, 3, 14);
  check_model(mlp, mb);

  auto tc = small_tf(Scheme::MuPT9, 2);
  tc.query_zero_init = false;
  tc.output_zero_init = false;
  auto tf = build_transformer(tc, OptimKind::Adam, SeededRng(15, 0));
  auto tb = lm_batch(2, 6, tc.vocab, 16);
  check_model(tf, tb);
}

TEST_CASE("post layernorm variant trains") {
  auto cfg = small_tf(Scheme::MuPT3);
  cfg.ln_position = TransformerConfig::LnPos::post;
  auto m = build_transformer(cfg, OptimKind::Adam, SeededRng(8, 0));
  REQUIRE(m.find("lnf.g") == nullptr);
  auto batch = lm_batch(2, 8, cfg.vocab, 10, true);
  AdamConfig adam;
  adam.master_lr = 0.01;
  Schedule sched;
  double first = 0, last = 0;
  for (int t = 0; t < 30; ++t) {
    zero_grads(m);
    auto fr = forward_pass(m, batch);
    if (t == 0) first = fr.loss_value;
    last = fr.loss_value;
    fr.tape.backward(fr.loss);
    adam_step(m, adam, sched, t);
  }
  REQUIRE(last < first);
}
