#pragma once
// Dense row-major double tensor. Copies are shallow (shared storage); use
// clone() for a deep copy. IEEE double everywhere, no mixed precision.

#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mupar/rng.hpp"

namespace mupar {

class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    size_ = 1;
    for (int64_t d : shape_) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      size_ *= d;
    }
    data_ = std::shared_ptr<double[]>(new double[size_]());
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor from(std::vector<int64_t> shape, const std::vector<double>& vals) {
    Tensor t(std::move(shape));
    if (int64_t(vals.size()) != t.size_) throw std::invalid_argument("Tensor::from: size mismatch");
    std::memcpy(t.data(), vals.data(), sizeof(double) * vals.size());
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  int64_t size() const { return size_; }
  int rank() const { return int(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_.at(size_t(i)); }

  double* data() { return data_.get(); }
  const double* data() const { return data_.get(); }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  // 2-d accessors for tests and small kernels
  double& at(int64_t i, int64_t j) { return data_[i * shape_[1] + j]; }
  double at(int64_t i, int64_t j) const { return data_[i * shape_[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) {
    for (int64_t i = 0; i < size_; ++i) data_[i] = v;
  }
  void zero() {
    if (size_ > 0) std::memset(data_.get(), 0, sizeof(double) * size_);
  }

  Tensor clone() const {
    Tensor t(shape_);
    if (size_ > 0) std::memcpy(t.data(), data(), sizeof(double) * size_);
    return t;
  }

  bool shares_storage(const Tensor& o) const { return data_ == o.data_; }

  bool all_finite() const {
    for (int64_t i = 0; i < size_; ++i)
      if (!std::isfinite(data_[i])) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

private:
  std::vector<int64_t> shape_;
  int64_t size_ = 0;
  std::shared_ptr<double[]> data_;
};

// Fill with N(mean, variance) draws. variance 0 fills the constant mean;
// negative variance is a parameter error.
inline void gaussian_init(Tensor& t, double mean, double variance, SeededRng& rng) {
  if (variance < 0) throw std::invalid_argument("gaussian_init: negative variance");
  if (variance == 0) {
    t.fill(mean);
    return;
  }
  double std = std::sqrt(variance);
  int64_t n = t.size();
  double* p = t.data();
  int64_t i = 0;
  for (; i + 1 < n; i += 2) {
    double z0, z1;
    rng.gaussian_pair(z0, z1);
    p[i] = mean + std * z0;
    p[i + 1] = mean + std * z1;
  }
  if (i < n) p[i] = mean + std * rng.gaussian();
}

inline Tensor gaussian_tensor(std::vector<int64_t> shape, double mean, double variance, SeededRng& rng) {
  Tensor t(std::move(shape));
  gaussian_init(t, mean, variance, rng);
  return t;
}

}  // namespace mupar
