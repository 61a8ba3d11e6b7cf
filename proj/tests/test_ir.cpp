#include <catch2/catch_amalgamated.hpp>

#include "cachet/parse.hpp"
#include "cachet/trace.hpp"
#include "support/helpers.hpp"

using namespace cachet;

TEST_CASE("minimal program parses") {
  Program p = parse_program("secret key:u8; array A[128]:4 @0x000; load A[0];");
  REQUIRE(p.secrets.size() == 1);
  REQUIRE(p.secrets[0].width == 8);
  REQUIRE(p.arrays.size() == 1);
  REQUIRE(p.arrays[0].count == 128);
  REQUIRE(p.body.size() == 1);
}

TEST_CASE("parse errors carry positions and reasons") {
  SECTION("misaligned base") {
    REQUIRE_THROWS_WITH(parse_program("array A[4]:4 @0x002;"),
                        Catch::Matchers::ContainsSubstring("multiple of the element size"));
  }
  SECTION("overlapping arrays") {
    REQUIRE_THROWS_WITH(parse_program("array A[4]:4 @0x000; array B[4]:4 @0x008;"),
                        Catch::Matchers::ContainsSubstring("overlaps"));
  }
  SECTION("unknown identifier") {
    REQUIRE_THROWS_WITH(parse_program("array A[4]:4 @0x000; load A[x];"),
                        Catch::Matchers::ContainsSubstring("unknown identifier"));
  }
  SECTION("non-constant loop bound") {
    REQUIRE_THROWS_WITH(
        parse_program("secret k:u4; array A[16]:4 @0x000; for i in 0..k { load A[i]; }"),
        Catch::Matchers::ContainsSubstring("loop bound must be a constant"));
  }
  SECTION("syntax error has line/col") {
    try {
      parse_program("secret k:u4;\nload ;");
      FAIL("expected throw");
    } catch (const ParseError& e) {
      REQUIRE(e.line == 2);
    }
  }
  SECTION("secret width bounds") {
    REQUIRE_THROWS(parse_program("secret k:u17;"));
    REQUIRE_THROWS(parse_program("secret k:u0;"));
  }
}

TEST_CASE("pretty-print round-trips") {
  auto check_roundtrip = [](const std::string& src) {
    Program p1 = parse_program(src);
    std::string canon = to_text(p1);
    Program p2 = parse_program(canon);
    REQUIRE(program_equal(p1, p2));
    REQUIRE(to_text(p2) == canon);
  };
  check_roundtrip(testutil::read_file(testutil::sample_path("branch_balanced.prog")));
  check_roundtrip(testutil::read_file(testutil::sample_path("branch_aliasing.prog")));
  check_roundtrip(testutil::read_file(testutil::sample_path("staircase.prog")));
  check_roundtrip(
      "secret a:u4; secret b:u4; array T[64]:4 @0x100;"
      "let x = (a + 3) * b; if (x >= 12) { store T[x & 15]; } else { load T[1]; }"
      "for i in 0..4 { load T[i * 2]; }");
}

TEST_CASE("unroll: straight line and loops") {
  Program p = parse_program(
      "secret k:u4; array A[16]:4 @0x000;"
      "load A[0]; load A[1]; load A[2];");
  UnrolledTrace t = unroll(p);
  REQUIRE(t.size() == 3);
  for (auto& a : t.accesses) {
    REQUIRE(a.guard_const_true);
    REQUIRE(a.static_addr.has_value());
  }

  Program loop = parse_program("array A[4]:4 @0x000; for i in 0..4 { load A[i]; }");
  UnrolledTrace lt = unroll(loop);
  REQUIRE(lt.size() == 4);
  for (int i = 0; i < 4; ++i) REQUIRE(*lt.accesses[static_cast<size_t>(i)].static_addr == 4u * i);
}

TEST_CASE("unroll: branch guards are mutually exclusive") {
  Program p = testutil::load_sample("branch_balanced.prog");
  UnrolledTrace t = unroll(p);
  REQUIRE(t.size() == 4);
  REQUIRE_FALSE(t.accesses[0].guard_const_true);
  REQUIRE_FALSE(t.accesses[1].guard_const_true);
  REQUIRE(t.accesses[2].guard_const_true);

  SecretSpace space(t.secrets);
  space.for_each([&](uint64_t, const std::map<std::string, uint32_t>& env) {
    uint32_t g1 = eval_expr(t.accesses[0].guard, env);
    uint32_t g2 = eval_expr(t.accesses[1].guard, env);
    REQUIRE(((g1 != 0) ^ (g2 != 0)));
  });
}

TEST_CASE("unroll limit enforced") {
  Program p = parse_program("array A[8]:4 @0x000; for i in 0..8 { load A[i]; }");
  REQUIRE_THROWS_AS(unroll(p, 7), UnrollError);
}

TEST_CASE("unroll is deterministic") {
  Program p = testutil::load_sample("branch_aliasing.prog");
  UnrolledTrace a = unroll(p);
  UnrolledTrace b = unroll(p);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(expr_equal(a.accesses[i].guard, b.accesses[i].guard));
    REQUIRE(expr_equal(a.accesses[i].addr, b.accesses[i].addr));
  }
}

TEST_CASE("conditional let merges into ite") {
  Program p = parse_program(
      "secret k:u2; array A[32]:4 @0x000;"
      "let x = 1;"
      "if (k == 0) { let x = 5; }"
      "load A[x];");
  UnrolledTrace t = unroll(p);
  REQUIRE(t.size() == 1);
  std::map<std::string, uint32_t> env{{"k", 0}};
  REQUIRE(eval_expr(t.accesses[0].addr, env) == 20);
  env["k"] = 1;
  REQUIRE(eval_expr(t.accesses[0].addr, env) == 4);
}

TEST_CASE("secret enumeration order and limits") {
  SECTION("one u2 secret") {
    SecretSpace space({{"k", 2}});
    std::vector<uint64_t> seen;
    space.for_each([&](uint64_t packed, const std::map<std::string, uint32_t>&) {
      seen.push_back(packed);
    });
    REQUIRE(seen == std::vector<uint64_t>{0, 1, 2, 3});
  }
  SECTION("one u8 secret has 256 assignments") {
    SecretSpace space({{"k", 8}});
    REQUIRE(space.size() == 256);
  }
  SECTION("two u8 secrets: lexicographic, (0,0) first") {
    SecretSpace space({{"a", 8}, {"b", 8}});
    REQUIRE(space.size() == 65536);
    auto env0 = space.unpack(0);
    REQUIRE(env0["a"] == 0);
    REQUIRE(env0["b"] == 0);
    auto env1 = space.unpack(1);
    REQUIRE(env1["a"] == 0);
    REQUIRE(env1["b"] == 1);
    auto env256 = space.unpack(256);
    REQUIRE(env256["a"] == 1);
    REQUIRE(env256["b"] == 0);
  }
  SECTION("enumeration guard at 20 bits") {
    SecretSpace space({{"a", 16}, {"b", 16}});
    REQUIRE_THROWS_AS(space.require_enumerable(), EnumerationError);
  }
}

TEST_CASE("expressions evaluate with 32-bit wraparound") {
  Program p = parse_program("secret k:u8; array A[8]:4 @0x000; load A[(k * 0xffffffff) & 7];");
  UnrolledTrace t = unroll(p);
  std::map<std::string, uint32_t> env{{"k", 3}};
  // 3 * 0xffffffff wraps to 0xfffffffd; & 7 = 5; addr = 20
  REQUIRE(eval_expr(t.accesses[0].addr, env) == 20);
}
