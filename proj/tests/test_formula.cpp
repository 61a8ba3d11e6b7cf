#include <catch2/catch_amalgamated.hpp>

#include "cachet/formula.hpp"
#include "cachet/sexpr.hpp"

using namespace cachet;

TEST_CASE("builders fold empty ranges") {
  REQUIRE(is_const_bool(f_and({}), true));
  REQUIRE(is_const_bool(f_or({}), false));
  REQUIRE(is_const_bool(f_and({f_true(), f_true()}), true));
  REQUIRE(is_const_bool(f_or({f_false()}), false));
  REQUIRE(f_add({})->op == FOp::IntConst);
}

TEST_CASE("evaluation matches smt semantics") {
  Env env;
  env["x"] = Value::of_bv(0x41f);
  env["b"] = Value::of_bool(true);
  env["n"] = Value::of_int(3);

  Formula x = f_var("x", Sort::Bv);
  REQUIRE(eval(f_bvlshr(x, f_bv(5)), env).bv == 0x20);
  REQUIRE(eval(f_bvand(f_bvlshr(x, f_bv(5)), f_bv(31)), env).bv == 0);
  REQUIRE(eval(f_bvshl(x, f_bv(40)), env).bv == 0);  // shift past width gives 0
  REQUIRE(eval(f_ult(x, f_bv(0x420)), env).b);
  REQUIRE(eval(f_and(f_var("b", Sort::Bool), f_true()), env).b);
  REQUIRE(eval(f_add({f_var("n", Sort::Int), f_int(4)}), env).i == 7);
  REQUIRE_THROWS_AS(eval(f_var("missing", Sort::Bool), env), FormulaError);
}

TEST_CASE("emission is deterministic and parseable") {
  Formula f = f_and({f_eq(f_var("m_1", Sort::Int), f_int(1)),
                     f_or(f_not(f_var("p", Sort::Bool)), f_var("q", Sort::Bool)),
                     f_ule(f_var("key", Sort::Bv), f_bv(127))});
  std::string text = to_smt(f);
  REQUIRE(text == to_smt(f));
  REQUIRE(text ==
          "(and (= m_1 1) (or (not p) q) (bvule key #x0000007f))");

  std::unordered_map<std::string, Sort> vars{
      {"m_1", Sort::Int}, {"p", Sort::Bool}, {"q", Sort::Bool}, {"key", Sort::Bv}};
  auto parsed = parse_sexprs(text);
  REQUIRE(parsed.size() == 1);
  Formula back = parse_formula(parsed[0], vars);
  REQUIRE(to_smt(back) == text);
}

TEST_CASE("substitution rewrites variables") {
  Formula f = f_or(f_var("p", Sort::Bool), f_var("q", Sort::Bool));
  std::unordered_map<std::string, Formula> map{{"p", f_false()}};
  REQUIRE(to_smt(subst_vars(f, map)) == "q");
}

TEST_CASE("sexpr parser handles nesting and comments") {
  auto es = parse_sexprs("; comment\n((a 1) (b #x0000000f))\nunsat");
  REQUIRE(es.size() == 2);
  REQUIRE_FALSE(es[0].is_atom);
  REQUIRE(es[0].size() == 2);
  REQUIRE(es[0][0][0].atom == "a");
  REQUIRE(es[1].atom == "unsat");
  REQUIRE_THROWS_AS(parse_sexprs("(a (b)"), SExprError);
}
