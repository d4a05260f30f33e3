#pragma once
// Symbolic per-tensor scaling rules: forward multiplier, init variance, and
// learning-rate scale as constant × fan_in_mult^p × fan_out_mult^q. The
// scheme tables are stored exactly as printed; exponents over finite dims are
// inert (the multiplier of a finite dim is 1).

#include <stdexcept>
#include <string>
#include <string_view>

#include "mupar/infshape.hpp"

namespace mupar {

struct ScaleExpr {
  double c = 1.0;
  Rational p_in{};
  Rational p_out{};

  double eval(const InfShape& s) const {
    return c * pow_rational(s.fan_in_mult(), p_in) * pow_rational(s.fan_out_mult(), p_out);
  }

  std::string str() const {
    std::string out = std::to_string(c);
    if (!p_in.is_zero()) out += " fi^" + p_in.str();
    if (!p_out.is_zero()) out += " fo^" + p_out.str();
    return out;
  }
};

// init_var_expr scales the init VARIANCE (not std)
struct AbcTriple {
  ScaleExpr mult_expr;
  ScaleExpr init_var_expr;
  ScaleExpr lr_expr;
};

enum class Scheme { SP, NTP, MuPT3, MuPT8, MuPT9 };
enum class OptimKind { SGD, Adam };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::SP: return "sp";
    case Scheme::NTP: return "ntp";
    case Scheme::MuPT3: return "mup-t3";
    case Scheme::MuPT8: return "mup-t8";
    case Scheme::MuPT9: return "mup-t9";
  }
  return "?";
}

inline Scheme scheme_from_string(std::string_view s) {
  if (s == "sp") return Scheme::SP;
  if (s == "ntp") return Scheme::NTP;
  if (s == "mup-t3") return Scheme::MuPT3;
  if (s == "mup-t8") return Scheme::MuPT8;
  if (s == "mup-t9") return Scheme::MuPT9;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "' (want sp|ntp|mup-t3|mup-t8|mup-t9)");
}

inline bool is_mup(Scheme s) { return s == Scheme::MuPT3 || s == Scheme::MuPT8 || s == Scheme::MuPT9; }

inline const char* to_string(OptimKind k) { return k == OptimKind::SGD ? "sgd" : "adam"; }

// One table cell. Constants are all 1 here: model-level multipliers (α's)
// and base-shape init values are folded in by the model builder as masters.
inline AbcTriple scheme_lookup(ParamRole role, Scheme scheme, OptimKind opt) {
  auto expr = [](double c, Rational pi, Rational po) { return ScaleExpr{c, pi, po}; };
  const Rational Z{0}, M1{-1}, M2{-2}, P1{1};
  const Rational MH{-1, 2}, PH{1, 2};

  if (role == ParamRole::ScalarLike)
    return {expr(1, Z, Z), expr(1, Z, Z), expr(1, Z, Z)};

  const bool adam = opt == OptimKind::Adam;
  const bool inputish = role == ParamRole::InputWeight || role == ParamRole::Bias;

  switch (scheme) {
    case Scheme::SP:
      return {expr(1, Z, Z), expr(1, M1, Z), expr(1, Z, Z)};
    case Scheme::NTP: {
      ScaleExpr lr = adam && role == ParamRole::HiddenWeight ? expr(1, MH, Z) : expr(1, Z, Z);
      return {expr(1, MH, Z), expr(1, Z, Z), lr};
    }
    case Scheme::MuPT3:
      if (inputish) return {expr(1, Z, Z), expr(1, M1, Z), adam ? expr(1, Z, Z) : expr(1, Z, P1)};
      if (role == ParamRole::HiddenWeight)
        return {expr(1, Z, Z), expr(1, M1, Z), adam ? expr(1, M1, Z) : expr(1, Z, Z)};
      return {expr(1, Z, Z), expr(1, M2, Z), expr(1, M1, Z)};  // output
    case Scheme::MuPT8:
      if (role == ParamRole::OutputWeight)
        return {expr(1, M1, Z), expr(1, Z, Z), adam ? expr(1, Z, Z) : expr(1, P1, Z)};
      return scheme_lookup(role, Scheme::MuPT3, opt);
    case Scheme::MuPT9:
      if (inputish) return {expr(1, Z, PH), expr(1, Z, M1), adam ? expr(1, Z, MH) : expr(1, Z, Z)};
      if (role == ParamRole::OutputWeight)
        return {expr(1, MH, Z), expr(1, M1, Z), adam ? expr(1, MH, Z) : expr(1, Z, Z)};
      return scheme_lookup(role, Scheme::MuPT3, opt);  // hidden
  }
  throw std::logic_error("scheme_lookup: unreachable");
}

// Trajectory-preserving reparametrization: multiplier × θ, init std / θ
// (variance / θ²), LR / θ² for SGD and / θ for Adam.
inline AbcTriple rescale_theta(const AbcTriple& t, const ScaleExpr& theta, OptimKind opt) {
  if (!(theta.c > 0)) throw std::invalid_argument("rescale_theta: theta constant must be positive");
  AbcTriple r = t;
  r.mult_expr.c *= theta.c;
  r.mult_expr.p_in = r.mult_expr.p_in + theta.p_in;
  r.mult_expr.p_out = r.mult_expr.p_out + theta.p_out;
  r.init_var_expr.c /= theta.c * theta.c;
  r.init_var_expr.p_in = r.init_var_expr.p_in - Rational{2} * theta.p_in;
  r.init_var_expr.p_out = r.init_var_expr.p_out - Rational{2} * theta.p_out;
  if (opt == OptimKind::SGD) {
    r.lr_expr.c /= theta.c * theta.c;
    r.lr_expr.p_in = r.lr_expr.p_in - Rational{2} * theta.p_in;
    r.lr_expr.p_out = r.lr_expr.p_out - Rational{2} * theta.p_out;
  } else {
    r.lr_expr.c /= theta.c;
    r.lr_expr.p_in = r.lr_expr.p_in - theta.p_in;
    r.lr_expr.p_out = r.lr_expr.p_out - theta.p_out;
  }
  return r;
}

inline double effective_multiplier(const AbcTriple& t, const InfShape& s, double master = 1.0) {
  return master * t.mult_expr.eval(s);
}

inline double effective_init_var(const AbcTriple& t, const InfShape& s, double master) {
  if (master < 0) throw std::invalid_argument("effective_init_var: master variance must be nonnegative");
  return master * t.init_var_expr.eval(s);
}

inline double effective_lr(const AbcTriple& t, const InfShape& s, double master) {
  return master * t.lr_expr.eval(s);
}

}  // namespace mupar
