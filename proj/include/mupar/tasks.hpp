#pragma once
// Ready-made TrialSetups binding a model family to a data source, so sweeps
// and transfer runs only have to pick hyperparameters and a scale.

#include <cstdint>
#include <memory>
#include <stdexcept>

#include "mupar/data.hpp"
#include "mupar/models.hpp"
#include "mupar/sweep.hpp"

namespace mupar {

// Student MLP fitting a frozen random teacher's argmax labels. The teacher and
// the data stream are independent of width and seed, so trials at different
// scales see the same task.
struct TeacherTaskSpec {
  int64_t d_in = 16;
  int64_t d_out = 10;
  int64_t base_width = 64;
  int64_t teacher_hidden = 64;
  MlpConfig::Act activation = MlpConfig::Act::relu;
  Scheme scheme = Scheme::MuPT3;
  OptimKind table = OptimKind::SGD;
  bool output_zero_init = true;
  uint64_t task_seed = 11;
  uint64_t data_seed = 17;
  double divergence_factor = 10.0;
  int64_t val_batches = 0;
  double theta = 1.0;  // != 1 rescales every triple after build (trains identically)
};

inline TrialSetup teacher_mlp_setup(const TeacherTaskSpec& spec) {
  if (spec.d_in < 1 || spec.d_out < 2 || spec.base_width < 1 || spec.teacher_hidden < 1)
    throw std::invalid_argument("teacher_mlp_setup: bad sizes");
  if (!(spec.theta > 0)) throw std::invalid_argument("teacher_mlp_setup: theta must be positive");

  TrialSetup setup;
  setup.scheme = spec.scheme;
  setup.table = spec.table;
  setup.val_batches = spec.val_batches;
  setup.divergence_factor = spec.divergence_factor;

  setup.build = [spec](const HpPoint& hp, const ScalePoint& scale, uint64_t seed) {
    MlpConfig cfg;
    cfg.d_in = spec.d_in;
    cfg.d_out = spec.d_out;
    cfg.width = scale.width;
    cfg.base_width = spec.base_width;
    cfg.depth = int(scale.depth);
    cfg.activation = spec.activation;
    cfg.scheme = spec.scheme;
    cfg.output_zero_init = spec.output_zero_init;
    cfg.init_std = hp.get("init_std", 1.0);
    cfg.sim_width = scale.sim_width;
    cfg.theta = spec.theta;
    return build_mlp(cfg, spec.table, SeededRng(seed).fork("model"));
  };

  TeacherTask task = TeacherTask::make(spec.d_in, spec.d_out, spec.task_seed, spec.teacher_hidden);
  setup.train_data = [spec, task](const ScalePoint& scale, uint64_t seed) -> BatchFn {
    return [spec, task, scale, seed](int64_t step) {
      return task.draw(scale.batch,
                       SeededRng(spec.data_seed).fork(seed).fork("train").fork(uint64_t(step)));
    };
  };
  setup.val_data = [spec, task](const ScalePoint& scale, uint64_t seed) -> BatchFn {
    return [spec, task, scale, seed](int64_t j) {
      return task.draw(scale.batch,
                       SeededRng(spec.data_seed).fork(seed).fork("val").fork(uint64_t(j)));
    };
  };
  return setup;
}

// Character-level language modeling on the bundled synthetic corpus. The
// model dimension tracks ScalePoint::width; heads keep a fixed size and the
// ffn keeps a fixed ratio, so width scaling touches only the two model dims.
struct LmTaskSpec {
  int64_t d_model_base = 64;
  int64_t d_head = 16;
  int64_t ffn_ratio = 4;
  TransformerConfig::LnPos ln_position = TransformerConfig::LnPos::pre;
  Scheme scheme = Scheme::MuPT3;
  OptimKind table = OptimKind::Adam;
  double alpha_output = 1.0;
  double alpha_attn = 1.0;
  double alpha_emb = 1.0;
  bool output_zero_init = true;
  bool query_zero_init = true;
  size_t corpus_bytes = size_t(1) << 20;
  uint64_t corpus_seed = 7;
  uint64_t data_seed = 17;
  double divergence_factor = 10.0;
  int64_t val_batches = 0;
};

inline TrialSetup char_lm_setup(const LmTaskSpec& spec) {
  if (spec.d_model_base < 1 || spec.d_head < 1 || spec.ffn_ratio < 1)
    throw std::invalid_argument("char_lm_setup: bad sizes");

  TrialSetup setup;
  setup.scheme = spec.scheme;
  setup.table = spec.table;
  setup.val_batches = spec.val_batches;
  setup.divergence_factor = spec.divergence_factor;

  auto task = std::make_shared<CharTask>(CharTask::synthetic(spec.corpus_bytes, spec.corpus_seed));

  setup.build = [spec, task](const HpPoint& hp, const ScalePoint& scale, uint64_t seed) {
    if (scale.width % spec.d_head != 0)
      throw std::invalid_argument("char_lm_setup: width must be a multiple of d_head");
    TransformerConfig cfg;
    cfg.d_model = scale.width;
    cfg.d_model_base = spec.d_model_base;
    cfg.d_ffn = spec.ffn_ratio * scale.width;
    cfg.d_ffn_base = spec.ffn_ratio * spec.d_model_base;
    cfg.d_head = spec.d_head;
    cfg.d_head_base = spec.d_head;
    cfg.n_head = scale.width / spec.d_head;
    cfg.depth = int(scale.depth);
    cfg.vocab = task->vocab;
    cfg.context = scale.seq_len;
    cfg.ln_position = spec.ln_position;
    cfg.scheme = spec.scheme;
    cfg.alpha_output = hp.get("alpha_output", spec.alpha_output);
    cfg.alpha_attn = hp.get("alpha_attn", spec.alpha_attn);
    cfg.alpha_emb = hp.get("alpha_emb", spec.alpha_emb);
    cfg.output_zero_init = spec.output_zero_init;
    cfg.query_zero_init = spec.query_zero_init;
    cfg.init_std = hp.get("init_std", 1.0);
    cfg.sim_width = scale.sim_width;
    return build_transformer(cfg, spec.table, SeededRng(seed).fork("model"));
  };

  setup.train_data = [spec, task](const ScalePoint& scale, uint64_t seed) -> BatchFn {
    return [spec, task, scale, seed](int64_t step) {
      return task->window_batch(scale.batch, scale.seq_len,
                                SeededRng(spec.data_seed).fork(seed).fork("train").fork(uint64_t(step)),
                                0, task->train_end);
    };
  };
  setup.val_data = [spec, task](const ScalePoint& scale, uint64_t seed) -> BatchFn {
    return [spec, task, scale, seed](int64_t j) {
      return task->window_batch(scale.batch, scale.seq_len,
                                SeededRng(spec.data_seed).fork(seed).fork("val").fork(uint64_t(j)),
                                task->train_end, int64_t(task->ids.size()));
    };
  };
  return setup;
}

}  // namespace mupar
