#pragma once
// Width bookkeeping: each parameter dimension records its current size, its
// base size, and whether it scales with width. Classification into roles is
// purely structural.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mupar {

// exact rational exponents so table-equivalence checks need no tolerance
struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n) : num(n), den(1) {}
  Rational(long long n, long long d) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den == 0) throw std::invalid_argument("Rational: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
    if (num == 0) den = 1;
  }

  bool is_zero() const { return num == 0; }
  double to_double() const { return double(num) / double(den); }

  friend Rational operator+(Rational a, Rational b) { return Rational(a.num * b.den + b.num * a.den, a.den * b.den); }
  friend Rational operator-(Rational a, Rational b) { return Rational(a.num * b.den - b.num * a.den, a.den * b.den); }
  friend Rational operator*(Rational a, Rational b) { return Rational(a.num * b.num, a.den * b.den); }
  friend Rational operator-(Rational a) { return Rational(-a.num, a.den); }
  friend bool operator==(const Rational& a, const Rational& b) { return a.num == b.num && a.den == b.den; }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

  std::string str() const { return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den); }
};

inline double ipow(double base, long long e) {
  if (e < 0) return 1.0 / ipow(base, -e);
  double r = 1.0;
  while (e) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

// m^r, exact when m is a power of two and r has denominator 1 or 2
inline double pow_rational(double m, const Rational& r) {
  if (r.is_zero() || m == 1.0) return 1.0;
  if (r.den == 1) return ipow(m, r.num);
  if (r.den == 2) return ipow(std::sqrt(m), r.num);
  return std::pow(m, r.to_double());
}

struct Dim {
  int64_t size = 1;
  int64_t base = 1;
  bool infinite = false;

  static Dim inf(int64_t size, int64_t base) {
    if (size < 1 || base < 1) throw std::invalid_argument("Dim: sizes must be positive");
    return Dim{size, base, true};
  }
  static Dim fin(int64_t size) {
    if (size < 1) throw std::invalid_argument("Dim: sizes must be positive");
    return Dim{size, size, false};
  }

  // width multiplier relative to the base shape; finite dims never scale
  double mult() const { return infinite ? double(size) / double(base) : 1.0; }
};

enum class ShapeCategory { MatrixLike, VectorLike, ScalarLike };

enum class ParamRole { InputWeight, OutputWeight, HiddenWeight, Bias, ScalarLike };

inline const char* to_string(ParamRole r) {
  switch (r) {
    case ParamRole::InputWeight: return "input_weight";
    case ParamRole::OutputWeight: return "output_weight";
    case ParamRole::HiddenWeight: return "hidden_weight";
    case ParamRole::Bias: return "bias";
    case ParamRole::ScalarLike: return "scalar_like";
  }
  return "?";
}

// Matrices store fan_out first, fan_in second; vectors carry a single dim
// whose size is their fan_out (a bias's fan_in is 1).
class InfShape {
public:
  InfShape() = default;

  static InfShape scalar() { return InfShape(); }
  static InfShape vec(Dim d) {
    InfShape s;
    s.dims_ = {d};
    return s;
  }
  static InfShape matrix(Dim fan_out, Dim fan_in) {
    InfShape s;
    s.dims_ = {fan_out, fan_in};
    return s;
  }

  const std::vector<Dim>& dims() const { return dims_; }
  int rank() const { return int(dims_.size()); }

  int n_infinite() const {
    int n = 0;
    for (const auto& d : dims_)
      if (d.infinite) ++n;
    return n;
  }

  int64_t fan_out() const { return dims_.empty() ? 1 : dims_[0].size; }
  int64_t fan_in() const { return dims_.size() < 2 ? 1 : dims_[1].size; }

  double fan_out_mult() const { return dims_.empty() ? 1.0 : dims_[0].mult(); }
  double fan_in_mult() const { return dims_.size() < 2 ? 1.0 : dims_[1].mult(); }

private:
  std::vector<Dim> dims_;
};

inline ShapeCategory classify(const InfShape& s) {
  switch (s.n_infinite()) {
    case 2: return ShapeCategory::MatrixLike;
    case 1: return ShapeCategory::VectorLike;
    default: return ShapeCategory::ScalarLike;
  }
}

inline ParamRole classify_role(const InfShape& s) {
  if (s.rank() == 2) {
    bool out_inf = s.dims()[0].infinite, in_inf = s.dims()[1].infinite;
    if (out_inf && in_inf) return ParamRole::HiddenWeight;
    if (out_inf) return ParamRole::InputWeight;
    if (in_inf) return ParamRole::OutputWeight;
    return ParamRole::ScalarLike;
  }
  if (s.rank() == 1 && s.dims()[0].infinite) return ParamRole::Bias;
  return ParamRole::ScalarLike;
}

}  // namespace mupar
