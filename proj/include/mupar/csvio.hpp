#pragma once
// File emission helpers. Every output is written to a temporary sibling and
// renamed into place, so a killed run never leaves a truncated file.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mupar/sweep.hpp"

namespace mupar {

inline void atomic_write_file(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open '" + tmp + "' for writing");
  size_t n = std::fwrite(content.data(), 1, content.size(), f);
  bool ok = (n == content.size()) && (std::fclose(f) == 0);
  if (!ok) {
    std::remove(tmp.c_str());
    throw std::runtime_error("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

// Training loss against learning rate, one row per (width, lr) cell with the
// mean over seeds. A diverged seed makes the cell's mean infinite, matching
// how selection treats it.
inline std::string lr_loss_csv(const std::vector<SweepRecord>& records) {
  std::map<std::pair<int64_t, double>, std::pair<double, int64_t>> cells;  // sum, count
  for (const auto& r : records) {
    auto& cell = cells[{r.scale.width, r.hp.lr()}];
    cell.first += r.diverged ? std::numeric_limits<double>::infinity() : r.final_train_loss;
    cell.second += 1;
  }
  std::string out = "width,log2_lr,mean_loss,n_seeds\n";
  char buf[160];
  for (const auto& [key, cell] : cells) {
    double mean = cell.first / double(cell.second);
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%lld\n", (long long)key.first,
                  std::log2(key.second), mean, (long long)cell.second);
    out += buf;
  }
  return out;
}

}  // namespace mupar
