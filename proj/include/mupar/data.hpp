#pragma once
// Toy data sources for trials: a fixed random teacher for classification,
// a character-level corpus (loaded or synthesized), and memorization batches.
// Every batch is a pure function of (task, data seed, step) so trials can be
// replayed exactly and widths always see the same data order.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mupar/kernels.hpp"
#include "mupar/param.hpp"
#include "mupar/rng.hpp"
#include "mupar/tensor.hpp"

namespace mupar {

// ---------------------------------------------------------------------------
// synthetic corpus: word salad with mild bigram structure, charset of 40
// (a-z, digits, space, period, comma, newline)

inline std::string synth_corpus(size_t n_bytes, uint64_t seed) {
  static const char* words[] = {
      "the",   "a",      "wide",   "deep",  "net",    "model", "layer",  "width",
      "rate",  "step",   "scale",  "loss",  "train",  "tunes", "learns", "keeps",
      "moves", "stays",  "grows",  "small", "large",  "base",  "stable", "signal",
      "update","weight", "input",  "output","hidden", "batch", "sweep",  "seed",
      "fixed", "zero",   "just",   "quite", "mixes",  "jumps", "quick",  "exact"};
  constexpr int n_words = int(sizeof(words) / sizeof(words[0]));

  SeededRng rng(seed, 0x5e);
  std::string out;
  out.reserve(n_bytes + 64);
  int sentence_in_par = 0;
  int prev = 0;
  while (out.size() < n_bytes) {
    int64_t len = 4 + rng.uniform_int(6);
    for (int64_t i = 0; i < len; ++i) {
      // half the time follow the previous word's preferred successor
      prev = rng.u01() < 0.5 ? (prev + 1) % n_words : int(rng.uniform_int(n_words));
      out += words[prev];
      if (i + 1 < len) out += rng.u01() < 0.08 ? ", " : " ";
    }
    if (rng.u01() < 0.15) {
      out += ' ';
      int64_t digits = 1 + rng.uniform_int(3);
      for (int64_t d = 0; d < digits; ++d) out += char('0' + rng.uniform_int(10));
    }
    out += '.';
    if (++sentence_in_par >= 8) {
      out += '\n';
      sentence_in_par = 0;
    } else {
      out += ' ';
    }
  }
  out.resize(n_bytes);
  return out;
}

// ---------------------------------------------------------------------------
// character-level language modeling task; last 10% of the text is validation

struct CharTask {
  std::string text;
  std::vector<int32_t> ids;
  std::string alphabet;  // sorted; position = token id
  int64_t vocab = 0;
  int64_t train_end = 0;

  static CharTask from_text(std::string txt) {
    if (txt.size() < 4) throw std::invalid_argument("char task: text too short");
    CharTask t;
    t.text = std::move(txt);
    bool seen[256] = {};
    for (unsigned char c : t.text) seen[c] = true;
    for (int c = 0; c < 256; ++c)
      if (seen[c]) t.alphabet += char(c);
    t.vocab = int64_t(t.alphabet.size());
    int32_t id_of[256];
    for (int64_t i = 0; i < t.vocab; ++i) id_of[(unsigned char)t.alphabet[i]] = int32_t(i);
    t.ids.reserve(t.text.size());
    for (unsigned char c : t.text) t.ids.push_back(id_of[c]);
    t.train_end = int64_t(t.ids.size()) - int64_t(t.ids.size()) / 10;
    return t;
  }

  static CharTask from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("char task: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
  }

  static CharTask synthetic(size_t n_bytes = size_t(1) << 20, uint64_t seed = 7) {
    return from_text(synth_corpus(n_bytes, seed));
  }

  Batch window_batch(int64_t batch_size, int64_t seq_len, SeededRng rng, int64_t lo, int64_t hi) const {
    int64_t span = hi - lo - seq_len;  // offsets: [lo, lo+span); targets stay below hi
    if (span <= 0) throw std::invalid_argument("char task: region shorter than sequence");
    Batch b;
    b.seq_len = seq_len;
    b.tokens.resize(batch_size * seq_len);
    b.targets.resize(batch_size * seq_len);
    for (int64_t r = 0; r < batch_size; ++r) {
      int64_t o = lo + rng.uniform_int(span);
      for (int64_t i = 0; i < seq_len; ++i) {
        b.tokens[r * seq_len + i] = ids[o + i];
        b.targets[r * seq_len + i] = ids[o + i + 1];
      }
    }
    return b;
  }

  Batch batch(int64_t batch_size, int64_t seq_len, uint64_t data_seed, int64_t step) const {
    return window_batch(batch_size, seq_len, SeededRng(data_seed).fork("train").fork(uint64_t(step)),
                        0, train_end);
  }
  Batch val_batch(int64_t batch_size, int64_t seq_len, uint64_t data_seed, int64_t j) const {
    return window_batch(batch_size, seq_len, SeededRng(data_seed).fork("val").fork(uint64_t(j)),
                        train_end, int64_t(ids.size()));
  }
};

// ---------------------------------------------------------------------------
// teacher-labeled classification: inputs are standard gaussians, labels the
// argmax of a fixed random tanh network; the task never changes with width

struct TeacherTask {
  int64_t d_in = 0, d_out = 0, hidden = 0;
  Tensor w1, b1, w2;

  static TeacherTask make(int64_t d_in, int64_t d_out, uint64_t task_seed, int64_t hidden = 64) {
    if (d_in < 1 || d_out < 2) throw std::invalid_argument("teacher task: need d_in >= 1, d_out >= 2");
    TeacherTask t;
    t.d_in = d_in;
    t.d_out = d_out;
    t.hidden = hidden;
    t.w1 = Tensor({hidden, d_in});
    t.b1 = Tensor({hidden});
    t.w2 = Tensor({d_out, hidden});
    SeededRng rng(task_seed, 0x7ea);
    auto r1 = rng.fork("w1");
    gaussian_init(t.w1, 0.0, 1.0 / double(d_in), r1);
    auto rb = rng.fork("b1");
    gaussian_init(t.b1, 0.0, 0.1, rb);
    auto r2 = rng.fork("w2");
    gaussian_init(t.w2, 0.0, 1.0 / double(hidden), r2);
    return t;
  }

  std::vector<int32_t> labels(const Tensor& x) const {
    int64_t n = x.shape()[0];
    EMat h = emap2(x) * emap2(w1).transpose();
    h.rowwise() += emap(b1, 1, hidden).row(0);
    EMat z = h.array().tanh().matrix() * emap2(w2).transpose();
    std::vector<int32_t> y(n);
    for (int64_t r = 0; r < n; ++r) {
      int32_t best = 0;
      for (int64_t c = 1; c < d_out; ++c)
        if (z(r, c) > z(r, best)) best = int32_t(c);
      y[r] = best;
    }
    return y;
  }

  Batch draw(int64_t batch_size, SeededRng rng) const {
    Batch b;
    b.x = Tensor({batch_size, d_in});
    gaussian_init(b.x, 0.0, 1.0, rng);
    b.targets = labels(b.x);
    return b;
  }

  Batch batch(int64_t batch_size, uint64_t data_seed, int64_t step) const {
    return draw(batch_size, SeededRng(data_seed).fork("train").fork(uint64_t(step)));
  }
  Batch val_batch(int64_t batch_size, uint64_t data_seed, int64_t j) const {
    return draw(batch_size, SeededRng(data_seed).fork("val").fork(uint64_t(j)));
  }
};

// ---------------------------------------------------------------------------
// fixed random batches for overfitting smoke tests

inline Batch memorization_batch(int64_t d_in, int64_t n_class, int64_t batch_size, uint64_t seed) {
  SeededRng rng(seed, 0x3e3);
  Batch b;
  b.x = Tensor({batch_size, d_in});
  auto rx = rng.fork("x");
  gaussian_init(b.x, 0.0, 1.0, rx);
  auto ry = rng.fork("y");
  b.targets.resize(batch_size);
  for (auto& y : b.targets) y = int32_t(ry.uniform_int(n_class));
  return b;
}

inline Batch memorization_lm_batch(int64_t vocab, int64_t batch_size, int64_t seq_len, uint64_t seed) {
  SeededRng rng(seed, 0x1b);
  Batch b;
  b.seq_len = seq_len;
  b.tokens.resize(batch_size * seq_len);
  b.targets.resize(batch_size * seq_len);
  for (int64_t r = 0; r < batch_size; ++r) {
    auto row = rng.fork(uint64_t(r));
    std::vector<int32_t> s(seq_len + 1);
    for (auto& id : s) id = int32_t(row.uniform_int(vocab));
    for (int64_t i = 0; i < seq_len; ++i) {
      b.tokens[r * seq_len + i] = s[i];
      b.targets[r * seq_len + i] = s[i + 1];
    }
  }
  return b;
}

}  // namespace mupar
