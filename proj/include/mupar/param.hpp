#pragma once
// Parameter records (values, grads, optimizer state, width shape, scaling
// triple) and the model container that turns them into tape leaves.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mupar/abc.hpp"
#include "mupar/infshape.hpp"
#include "mupar/kernels.hpp"
#include "mupar/rng.hpp"
#include "mupar/tensor.hpp"

namespace mupar {

struct ParamTensor {
  std::string name;
  Tensor value;   // stored weights; physical layout may differ from ishape order
  Tensor grad;
  InfShape ishape;
  ParamRole role = ParamRole::ScalarLike;
  AbcTriple triple;
  double master_init_var = 0.0;   // init variance this tensor would get at base shape
  double master_init_mean = 0.0;  // effective mean at init (stored mean is this / fwd_mult)
  std::string lr_group;           // master-LR key: input / hidden / output / scalar
  double fwd_mult = 1.0;          // effective forward multiplier at the primary use site

  // optimizer slots, allocated on first use
  Tensor opt_m;
  Tensor opt_v;
};

// name-keyed substream so draws depend on (seed, name) but not on scheme or
// on the other parameters; equivalent schemes then share raw gaussians
inline void init_param(ParamTensor& p, SeededRng& model_rng) {
  double var = effective_init_var(p.triple, p.ishape, p.master_init_var);
  double mean = p.fwd_mult != 0.0 ? p.master_init_mean / p.fwd_mult : 0.0;
  auto rng = model_rng.fork(p.name);
  gaussian_init(p.value, mean, var, rng);
}

struct Batch {
  Tensor x;                       // feature input for MLPs, [batch, d_in]
  std::vector<int32_t> tokens;    // LM input ids, batch·seq_len
  std::vector<int32_t> targets;   // class ids or next-token ids
  int64_t seq_len = 0;            // sequence length for LM batches (0: one sequence)
};

struct Capture {
  std::vector<std::pair<std::string, std::vector<double>>> named;

  void add(const std::string& name, const Tensor& t) {
    std::vector<double> v(t.data(), t.data() + t.size());
    named.emplace_back(name, std::move(v));
  }
  void add(const std::string& name, std::vector<double> v) { named.emplace_back(name, std::move(v)); }
  const std::vector<double>* find(std::string_view name) const {
    for (const auto& [n, v] : named)
      if (n == name) return &v;
    return nullptr;
  }
};

struct Model {
  std::vector<ParamTensor> params;
  int64_t seq_len = 0;  // > 0 for sequence models
  int64_t vocab = 0;
  int64_t d_in = 0;
  int64_t d_out = 0;

  // builds the loss node from per-param leaves; leaves[i] aliases params[i]
  std::function<NodeRef(Tape&, std::vector<NodeRef>&, const Batch&, Capture*)> graph;

  ParamTensor* find(std::string_view name) {
    for (auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
  const ParamTensor* find(std::string_view name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }

  int64_t n_params() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
};

struct ForwardResult {
  Tape tape;
  NodeRef loss;
  double loss_value = 0.0;
  bool finite = true;
};

inline ForwardResult forward_pass(Model& m, const Batch& batch, Capture* cap = nullptr) {
  ForwardResult r;
  std::vector<NodeRef> leaves;
  leaves.reserve(m.params.size());
  for (auto& p : m.params) leaves.push_back(r.tape.leaf(p.value, p.grad));
  r.loss = m.graph(r.tape, leaves, batch, cap);
  r.loss_value = r.loss->value[0];
  r.finite = std::isfinite(r.loss_value);
  return r;
}

inline double forward_loss(Model& m, const Batch& batch, Capture* cap = nullptr) {
  return forward_pass(m, batch, cap).loss_value;
}

inline void zero_grads(Model& m) {
  for (auto& p : m.params) p.grad.zero();
}

}  // namespace mupar
