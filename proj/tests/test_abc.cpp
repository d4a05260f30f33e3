#include <catch2/catch_amalgamated.hpp>

#include <stdexcept>
#include <vector>

#include "mupar/abc.hpp"
#include "mupar/infshape.hpp"

using namespace mupar;

namespace {

bool expr_eq(const ScaleExpr& a, const ScaleExpr& b) {
  return a.c == b.c && a.p_in == b.p_in && a.p_out == b.p_out;
}

bool triple_eq(const AbcTriple& a, const AbcTriple& b) {
  return expr_eq(a.mult_expr, b.mult_expr) && expr_eq(a.init_var_expr, b.init_var_expr) &&
         expr_eq(a.lr_expr, b.lr_expr);
}

// exponents over finite dims never bite; zero them so equivalent cells compare equal
AbcTriple drop_inert(AbcTriple t, ParamRole role) {
  bool in_finite = role == ParamRole::InputWeight || role == ParamRole::Bias || role == ParamRole::ScalarLike;
  bool out_finite = role == ParamRole::OutputWeight || role == ParamRole::ScalarLike;
  for (ScaleExpr* e : {&t.mult_expr, &t.init_var_expr, &t.lr_expr}) {
    if (in_finite) e->p_in = Rational{};
    if (out_finite) e->p_out = Rational{};
  }
  return t;
}

}  // namespace

TEST_CASE("rational arithmetic is exact and normalized") {
  REQUIRE(Rational(2, 4) == Rational(1, 2));
  REQUIRE(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
  REQUIRE(Rational(1, 2) - Rational(1, 2) == Rational(0));
  REQUIRE(Rational(-1, -2) == Rational(1, 2));
  REQUIRE(Rational(1, -2) == Rational(-1, 2));
  REQUIRE(Rational(2) * Rational(1, 2) == Rational(1));
  REQUIRE(Rational(0, 5).den == 1);
  REQUIRE_THROWS_AS(Rational(1, 0), std::invalid_argument);
}

TEST_CASE("rational powers of two evaluate exactly") {
  REQUIRE(ipow(2.0, 10) == 1024.0);
  REQUIRE(ipow(2.0, -2) == 0.25);
  REQUIRE(pow_rational(4.0, Rational(1, 2)) == 2.0);
  REQUIRE(pow_rational(4.0, Rational(-1, 2)) == 0.5);
  REQUIRE(pow_rational(16.0, Rational(-2)) == 1.0 / 256.0);
  REQUIRE(pow_rational(7.0, Rational(0)) == 1.0);
  REQUIRE(pow_rational(1.0, Rational(5, 3)) == 1.0);
}

TEST_CASE("dims validate and expose width multipliers") {
  Dim d = Dim::inf(512, 128);
  REQUIRE(d.mult() == 4.0);
  Dim f = Dim::fin(32);
  REQUIRE(f.mult() == 1.0);
  REQUIRE(f.size == f.base);
  REQUIRE_THROWS_AS(Dim::fin(0), std::invalid_argument);
  REQUIRE_THROWS_AS(Dim::inf(0, 4), std::invalid_argument);
}

TEST_CASE("classification counts infinite dims") {
  auto hidden = InfShape::matrix(Dim::inf(256, 64), Dim::inf(256, 64));
  auto input = InfShape::matrix(Dim::inf(256, 64), Dim::fin(10));
  auto output = InfShape::matrix(Dim::fin(10), Dim::inf(256, 64));
  auto bias = InfShape::vec(Dim::inf(256, 64));
  auto finv = InfShape::vec(Dim::fin(3));
  auto sc = InfShape::scalar();
  auto finm = InfShape::matrix(Dim::fin(3), Dim::fin(4));

  REQUIRE(classify(hidden) == ShapeCategory::MatrixLike);
  REQUIRE(classify(input) == ShapeCategory::VectorLike);
  REQUIRE(classify(output) == ShapeCategory::VectorLike);
  REQUIRE(classify(bias) == ShapeCategory::VectorLike);
  REQUIRE(classify(finv) == ShapeCategory::ScalarLike);
  REQUIRE(classify(sc) == ShapeCategory::ScalarLike);
  REQUIRE(classify(finm) == ShapeCategory::ScalarLike);

  REQUIRE(classify_role(hidden) == ParamRole::HiddenWeight);
  REQUIRE(classify_role(input) == ParamRole::InputWeight);
  REQUIRE(classify_role(output) == ParamRole::OutputWeight);
  REQUIRE(classify_role(bias) == ParamRole::Bias);
  REQUIRE(classify_role(finv) == ParamRole::ScalarLike);
  REQUIRE(classify_role(sc) == ParamRole::ScalarLike);
  REQUIRE(classify_role(finm) == ParamRole::ScalarLike);
}

TEST_CASE("bias fan_in is one") {
  auto bias = InfShape::vec(Dim::inf(256, 64));
  REQUIRE(bias.fan_in() == 1);
  REQUIRE(bias.fan_in_mult() == 1.0);
  REQUIRE(bias.fan_out() == 256);
  REQUIRE(bias.fan_out_mult() == 4.0);
}

TEST_CASE("table cells match the printed schemes") {
  const Rational Z{0}, M1{-1}, M2{-2}, P1{1}, MH{-1, 2}, PH{1, 2};
  auto cell = [](ParamRole r, Scheme s, OptimKind o) { return scheme_lookup(r, s, o); };

  SECTION("baseline: multiplier 1, init var 1/fan_in, flat LR") {
    for (auto role : {ParamRole::InputWeight, ParamRole::Bias, ParamRole::HiddenWeight, ParamRole::OutputWeight})
      for (auto opt : {OptimKind::SGD, OptimKind::Adam}) {
        auto t = cell(role, Scheme::SP, opt);
        REQUIRE(expr_eq(t.mult_expr, {1, Z, Z}));
        REQUIRE(expr_eq(t.init_var_expr, {1, M1, Z}));
        REQUIRE(expr_eq(t.lr_expr, {1, Z, Z}));
      }
  }

  SECTION("kernel-regime control: 1/sqrt(fan_in) multiplier, unit init") {
    for (auto role : {ParamRole::InputWeight, ParamRole::Bias, ParamRole::HiddenWeight, ParamRole::OutputWeight}) {
      auto t = cell(role, Scheme::NTP, OptimKind::SGD);
      REQUIRE(expr_eq(t.mult_expr, {1, MH, Z}));
      REQUIRE(expr_eq(t.init_var_expr, {1, Z, Z}));
      REQUIRE(expr_eq(t.lr_expr, {1, Z, Z}));
    }
    REQUIRE(expr_eq(cell(ParamRole::HiddenWeight, Scheme::NTP, OptimKind::Adam).lr_expr, {1, MH, Z}));
    REQUIRE(expr_eq(cell(ParamRole::OutputWeight, Scheme::NTP, OptimKind::Adam).lr_expr, {1, Z, Z}));
  }

  SECTION("main table") {
    auto h = cell(ParamRole::HiddenWeight, Scheme::MuPT3, OptimKind::Adam);
    REQUIRE(expr_eq(h.mult_expr, {1, Z, Z}));
    REQUIRE(expr_eq(h.init_var_expr, {1, M1, Z}));
    REQUIRE(expr_eq(h.lr_expr, {1, M1, Z}));

    auto o = cell(ParamRole::OutputWeight, Scheme::MuPT3, OptimKind::SGD);
    REQUIRE(expr_eq(o.init_var_expr, {1, M2, Z}));
    REQUIRE(expr_eq(o.lr_expr, {1, M1, Z}));

    auto i = cell(ParamRole::InputWeight, Scheme::MuPT3, OptimKind::SGD);
    REQUIRE(expr_eq(i.mult_expr, {1, Z, Z}));
    REQUIRE(expr_eq(i.init_var_expr, {1, M1, Z}));
    REQUIRE(expr_eq(i.lr_expr, {1, Z, P1}));

    REQUIRE(triple_eq(cell(ParamRole::Bias, Scheme::MuPT3, OptimKind::SGD), i));
  }

  SECTION("output-multiplier variant") {
    auto o = cell(ParamRole::OutputWeight, Scheme::MuPT8, OptimKind::Adam);
    REQUIRE(expr_eq(o.mult_expr, {1, M1, Z}));
    REQUIRE(expr_eq(o.init_var_expr, {1, Z, Z}));
    REQUIRE(expr_eq(o.lr_expr, {1, Z, Z}));
    REQUIRE(expr_eq(cell(ParamRole::OutputWeight, Scheme::MuPT8, OptimKind::SGD).lr_expr, {1, P1, Z}));
    REQUIRE(triple_eq(cell(ParamRole::HiddenWeight, Scheme::MuPT8, OptimKind::Adam),
                      cell(ParamRole::HiddenWeight, Scheme::MuPT3, OptimKind::Adam)));
  }

  SECTION("sqrt variant") {
    auto i = cell(ParamRole::InputWeight, Scheme::MuPT9, OptimKind::Adam);
    REQUIRE(expr_eq(i.mult_expr, {1, Z, PH}));
    REQUIRE(expr_eq(i.init_var_expr, {1, Z, M1}));
    REQUIRE(expr_eq(i.lr_expr, {1, Z, MH}));

    auto o = cell(ParamRole::OutputWeight, Scheme::MuPT9, OptimKind::SGD);
    REQUIRE(expr_eq(o.mult_expr, {1, MH, Z}));
    REQUIRE(expr_eq(o.init_var_expr, {1, M1, Z}));
    REQUIRE(expr_eq(o.lr_expr, {1, Z, Z}));
  }

  SECTION("scalar-like is flat under every scheme") {
    for (auto s : {Scheme::SP, Scheme::NTP, Scheme::MuPT3, Scheme::MuPT8, Scheme::MuPT9})
      for (auto opt : {OptimKind::SGD, OptimKind::Adam}) {
        auto t = cell(ParamRole::ScalarLike, s, opt);
        REQUIRE(expr_eq(t.mult_expr, {1, Z, Z}));
        REQUIRE(expr_eq(t.init_var_expr, {1, Z, Z}));
        REQUIRE(expr_eq(t.lr_expr, {1, Z, Z}));
      }
  }
}

TEST_CASE("effective values scale with the width multiplier") {
  auto hidden = InfShape::matrix(Dim::inf(512, 128), Dim::inf(512, 128));
  auto t = scheme_lookup(ParamRole::HiddenWeight, Scheme::MuPT3, OptimKind::Adam);
  REQUIRE(effective_lr(t, hidden, 0.1) == 0.1 / 4.0);

  auto base = InfShape::matrix(Dim::inf(128, 128), Dim::inf(128, 128));
  for (auto s : {Scheme::SP, Scheme::NTP, Scheme::MuPT3, Scheme::MuPT8, Scheme::MuPT9})
    for (auto opt : {OptimKind::SGD, OptimKind::Adam})
      for (auto role : {ParamRole::InputWeight, ParamRole::HiddenWeight, ParamRole::OutputWeight}) {
        auto tr = scheme_lookup(role, s, opt);
        REQUIRE(effective_multiplier(tr, base) == 1.0);
        REQUIRE(effective_init_var(tr, base, 0.25) == 0.25);
        REQUIRE(effective_lr(tr, base, 0.01) == 0.01);
      }

  // width-4 ratio: input SGD LR up by the ratio, output init var down by ratio²
  int64_t n0 = 128, n = 512;
  double ratio = double(n) / double(n0);
  auto in_shape = InfShape::matrix(Dim::inf(n, n0), Dim::fin(32));
  auto in_t = scheme_lookup(ParamRole::InputWeight, Scheme::MuPT3, OptimKind::SGD);
  REQUIRE(effective_lr(in_t, in_shape, 1.0) == ratio);

  auto out_shape = InfShape::matrix(Dim::fin(10), Dim::inf(n, n0));
  auto out_t = scheme_lookup(ParamRole::OutputWeight, Scheme::MuPT3, OptimKind::SGD);
  // master var 1/n0 at base, so the effective value is 1/(n·ratio)
  REQUIRE(effective_init_var(out_t, out_shape, 1.0 / double(n0)) == 1.0 / (double(n) * ratio));
  REQUIRE(effective_lr(out_t, out_shape, 1.0) == 1.0 / ratio);

  REQUIRE_THROWS_AS(effective_init_var(out_t, out_shape, -1.0), std::invalid_argument);
}

TEST_CASE("theta rescaling maps between the table variants") {
  const ScaleExpr id{1, Rational{0}, Rational{0}};
  const ScaleExpr inv_fi{1, Rational{-1}, Rational{0}};
  const ScaleExpr inv_sqrt_fi{1, Rational{-1, 2}, Rational{0}};
  const ScaleExpr sqrt_fo{1, Rational{0}, Rational{1, 2}};

  SECTION("identity leaves the triple unchanged") {
    auto t = scheme_lookup(ParamRole::OutputWeight, Scheme::MuPT3, OptimKind::SGD);
    REQUIRE(triple_eq(rescale_theta(t, id, OptimKind::SGD), t));
  }

  SECTION("positivity is required") {
    auto t = scheme_lookup(ParamRole::HiddenWeight, Scheme::MuPT3, OptimKind::SGD);
    REQUIRE_THROWS_AS(rescale_theta(t, ScaleExpr{0.0, {}, {}}, OptimKind::SGD), std::invalid_argument);
    REQUIRE_THROWS_AS(rescale_theta(t, ScaleExpr{-2.0, {}, {}}, OptimKind::Adam), std::invalid_argument);
  }

  SECTION("output column: theta = 1/fan_in reaches the multiplier variant") {
    for (auto opt : {OptimKind::SGD, OptimKind::Adam}) {
      auto got = rescale_theta(scheme_lookup(ParamRole::OutputWeight, Scheme::MuPT3, opt), inv_fi, opt);
      auto want = scheme_lookup(ParamRole::OutputWeight, Scheme::MuPT8, opt);
      REQUIRE(triple_eq(drop_inert(got, ParamRole::OutputWeight), drop_inert(want, ParamRole::OutputWeight)));
    }
  }

  SECTION("output column: theta = 1/sqrt(fan_in) reaches the sqrt variant") {
    for (auto opt : {OptimKind::SGD, OptimKind::Adam}) {
      auto got = rescale_theta(scheme_lookup(ParamRole::OutputWeight, Scheme::MuPT3, opt), inv_sqrt_fi, opt);
      auto want = scheme_lookup(ParamRole::OutputWeight, Scheme::MuPT9, opt);
      REQUIRE(triple_eq(drop_inert(got, ParamRole::OutputWeight), drop_inert(want, ParamRole::OutputWeight)));
    }
  }

  SECTION("input and bias columns: theta = sqrt(fan_out) reaches the sqrt variant") {
    for (auto role : {ParamRole::InputWeight, ParamRole::Bias})
      for (auto opt : {OptimKind::SGD, OptimKind::Adam}) {
        auto got = rescale_theta(scheme_lookup(role, Scheme::MuPT3, opt), sqrt_fo, opt);
        auto want = scheme_lookup(role, Scheme::MuPT9, opt);
        REQUIRE(triple_eq(drop_inert(got, role), drop_inert(want, role)));
      }
  }

  SECTION("hidden column is shared by all three variants") {
    for (auto opt : {OptimKind::SGD, OptimKind::Adam}) {
      auto t3 = scheme_lookup(ParamRole::HiddenWeight, Scheme::MuPT3, opt);
      REQUIRE(triple_eq(t3, scheme_lookup(ParamRole::HiddenWeight, Scheme::MuPT8, opt)));
      REQUIRE(triple_eq(t3, scheme_lookup(ParamRole::HiddenWeight, Scheme::MuPT9, opt)));
    }
  }

  SECTION("input, bias, hidden agree between the first two variants") {
    for (auto role : {ParamRole::InputWeight, ParamRole::Bias, ParamRole::HiddenWeight})
      for (auto opt : {OptimKind::SGD, OptimKind::Adam})
        REQUIRE(triple_eq(scheme_lookup(role, Scheme::MuPT3, opt), scheme_lookup(role, Scheme::MuPT8, opt)));
  }

  SECTION("round trip is exact") {
    std::vector<ScaleExpr> thetas = {
        {2.0, Rational{3, 2}, Rational{-5, 3}},
        {0.25, Rational{-1}, Rational{7, 4}},
        {8.0, Rational{1, 6}, Rational{0}},
    };
    for (const auto& th : thetas) {
      ScaleExpr inv{1.0 / th.c, -th.p_in, -th.p_out};
      for (auto opt : {OptimKind::SGD, OptimKind::Adam})
        for (auto role : {ParamRole::InputWeight, ParamRole::HiddenWeight, ParamRole::OutputWeight}) {
          auto t = scheme_lookup(role, Scheme::MuPT3, opt);
          auto back = rescale_theta(rescale_theta(t, th, opt), inv, opt);
          REQUIRE(triple_eq(back, t));
        }
    }
  }
}

TEST_CASE("scheme names parse and print") {
  for (auto s : {Scheme::SP, Scheme::NTP, Scheme::MuPT3, Scheme::MuPT8, Scheme::MuPT9})
    REQUIRE(scheme_from_string(to_string(s)) == s);
  REQUIRE_THROWS_AS(scheme_from_string("mup"), std::invalid_argument);
  REQUIRE(is_mup(Scheme::MuPT3));
  REQUIRE(is_mup(Scheme::MuPT9));
  REQUIRE_FALSE(is_mup(Scheme::SP));
  REQUIRE_FALSE(is_mup(Scheme::NTP));
}
