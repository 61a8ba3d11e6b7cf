#include <catch2/catch_amalgamated.hpp>

#include "cachet/cache.hpp"
#include "cachet/metrics.hpp"
#include "cachet/oracle.hpp"
#include "support/helpers.hpp"

using namespace cachet;

namespace {

CacheConfig direct_1k() {
  CacheConfig cfg;
  cfg.num_sets = 32;
  cfg.line_size = 32;
  cfg.assoc = 1;
  cfg.policy = Policy::DirectMapped;
  return cfg;
}

CacheConfig two_way(Policy policy, uint32_t sets = 1) {
  CacheConfig cfg;
  cfg.num_sets = sets;
  cfg.line_size = 32;
  cfg.assoc = 2;
  cfg.policy = policy;
  return cfg;
}

std::vector<bool> bits(const std::string& s) {
  std::vector<bool> out;
  for (char c : s) out.push_back(c == '1');
  return out;
}

}  // namespace

TEST_CASE("address mapping: 1KB direct-mapped, 32-byte lines") {
  CacheConfig cfg = direct_1k();
  auto l0 = map_address(cfg, 0x0);
  REQUIRE(l0.block == 0);
  REQUIRE(l0.set == 0);
  REQUIRE(l0.tag == 0);
  auto l1 = map_address(cfg, 0x420);
  REQUIRE(l1.block == 33);
  REQUIRE(l1.set == 1);
  REQUIRE(l1.tag == 1);
  auto l2 = map_address(cfg, 0x41f);
  REQUIRE(l2.block == 32);
  REQUIRE(l2.set == 0);
  REQUIRE(l2.tag == 1);
}

TEST_CASE("cache config text parsing") {
  CacheConfig cfg = parse_cache_config("sets = 32\nline_size = 32\nassoc = 1\npolicy = direct\n");
  REQUIRE(cfg.num_sets == 32);
  REQUIRE(cfg.policy == Policy::DirectMapped);
  REQUIRE_THROWS_AS(parse_cache_config("sets = 3\n"), CacheError);
  REQUIRE_THROWS_AS(parse_cache_config("policy = plru\n"), CacheError);
  // assoc-1 lru degenerates to direct-mapped
  REQUIRE(parse_cache_config("sets=4\nassoc=1\npolicy=lru\n").policy == Policy::DirectMapped);
}

TEST_CASE("simulator: two-way LRU keeps the reloaded block") {
  // m1 m2 m2 m1 in one set: the second m1 access still hits
  auto misses = simulate(two_way(Policy::Lru), {1, 2, 2, 1});
  REQUIRE(misses == bits("1100"));
}

TEST_CASE("simulator: two-way FIFO ignores hits for replacement state") {
  // m1 m2 m1 m1: r3 hits and leaves state unchanged, r4 still hits
  auto misses = simulate(two_way(Policy::Fifo), {1, 2, 1, 1});
  REQUIRE(misses == bits("1100"));
  // contrast with eviction: a third distinct block evicts the oldest (m1)
  auto evict = simulate(two_way(Policy::Fifo), {1, 2, 1, 3, 1});
  REQUIRE(evict == bits("11011"));
}

TEST_CASE("simulator: direct-mapped ping-pong") {
  CacheConfig cfg = direct_1k();
  // same set, distinct tags: every access misses
  auto misses = simulate(cfg, {0, 32, 0});
  REQUIRE(misses == bits("111"));
  // same block twice: second is a hit
  REQUIRE(simulate(cfg, {5, 5}) == bits("10"));
}

TEST_CASE("lru vs fifo differ on reordering hits") {
  // one set, 2-way; sequence m1 m2 m1 m3 m2:
  //   LRU: after m1 m2 m1(hit, moves m1 to front) m3 evicts m2 -> m2 misses
  //   FIFO: m1 is oldest, m3 evicts m1 -> m2 still hits
  auto lru = simulate(two_way(Policy::Lru), {1, 2, 1, 3, 2});
  auto fifo = simulate(two_way(Policy::Fifo), {1, 2, 1, 3, 2});
  REQUIRE(lru == bits("11011"));
  REQUIRE(fifo == bits("11010"));
}

TEST_CASE("observe maps misses to observations") {
  REQUIRE(observe(AttackModel::Time, bits("1100")).miss_count == 2);
  REQUIRE(observe(AttackModel::Trace, bits("1100")).key() == "t1100");
  REQUIRE(observe(AttackModel::Time, {}).miss_count == 0);
}

TEST_CASE("apply_actions: injections and invalidations") {
  SECTION("prepend a miss") {
    auto out = apply_actions(bits("110"), {RuntimeAction::inject_miss(0)});
    REQUIRE(out == bits("1110"));
  }
  SECTION("append a hit equalizes the pair") {
    auto out = apply_actions(bits("110"), {RuntimeAction::inject_hit(3)});
    REQUIRE(out == bits("1100"));
  }
  SECTION("empty schedule is identity") {
    REQUIRE(apply_actions(bits("101"), {}) == bits("101"));
  }
  SECTION("inject hit at 0 is illegal") {
    REQUIRE_THROWS_AS(apply_actions(bits("1"), {RuntimeAction::inject_hit(0)}), ActionError);
  }
  SECTION("positional invalidation flips a hit") {
    auto out = apply_actions(bits("10"), {RuntimeAction::invalidate(1)});
    REQUIRE(out == bits("11"));
  }
  SECTION("invalidation by block targets the next access to it") {
    auto out = apply_actions(bits("100"), {RuntimeAction::invalidate(1, 7)}, {5, 6, 7});
    REQUIRE(out == bits("101"));
  }
  SECTION("invalidating a never-accessed block fails") {
    REQUIRE_THROWS_AS(apply_actions(bits("10"), {RuntimeAction::invalidate(0, 99)}, {1, 2}),
                      ActionError);
  }
  SECTION("length grows by exactly the number of injections") {
    auto out = apply_actions(bits("10"),
                             {RuntimeAction::inject_miss(0), RuntimeAction::inject_hit(2),
                              RuntimeAction::inject_miss(2)});
    REQUIRE(out.size() == 5);
  }
}

TEST_CASE("oracle: balanced branch program is single-class") {
  Program p = testutil::load_sample("branch_balanced.prog");
  UnrolledTrace t = unroll(p);
  OracleReport rep = oracle_classes(t, direct_1k(), AttackModel::Time);
  REQUIRE(rep.classes.size() == 1);
  REQUIRE(rep.classes.begin()->first.miss_count == 2);
  REQUIRE(rep.classes.begin()->second.size() == 256);

  OracleReport tr = oracle_classes(t, direct_1k(), AttackModel::Trace);
  REQUIRE(tr.classes.size() == 1);
  REQUIRE(tr.classes.begin()->first.key() == "t110");
}

TEST_CASE("oracle: aliasing program leaks exactly key=255") {
  Program p = testutil::load_sample("branch_aliasing.prog");
  UnrolledTrace t = unroll(p);
  OracleReport rep = oracle_classes(t, direct_1k(), AttackModel::Time);
  REQUIRE(rep.classes.size() == 2);
  Observation one;
  one.kind = AttackModel::Time;
  one.miss_count = 1;
  REQUIRE(rep.classes.at(one) == std::vector<uint64_t>{255});
  Observation two = one;
  two.miss_count = 2;
  REQUIRE(rep.classes.at(two).size() == 255);

  OracleReport tr = oracle_classes(t, direct_1k(), AttackModel::Trace);
  REQUIRE(tr.classes.size() == 2);
  Observation alias;
  alias.kind = AttackModel::Trace;
  alias.bits = bits("100");
  REQUIRE(tr.classes.at(alias) == std::vector<uint64_t>{255});
}

TEST_CASE("oracle class sizes always sum to the domain") {
  Program p = testutil::load_sample("staircase.prog");
  UnrolledTrace t = unroll(p);
  for (auto cfg : {direct_1k(), two_way(Policy::Lru, 16), two_way(Policy::Fifo, 16)}) {
    for (auto model : {AttackModel::Time, AttackModel::Trace}) {
      OracleReport rep = oracle_classes(t, cfg, model);
      uint64_t total = 0;
      for (auto& [obs, members] : rep.classes) total += members.size();
      REQUIRE(total == rep.domain_size());
    }
  }
}

TEST_CASE("oracle report text is stable and sorted") {
  Program p = testutil::load_sample("staircase.prog");
  UnrolledTrace t = unroll(p);
  OracleReport rep = oracle_classes(t, direct_1k(), AttackModel::Time);
  std::string text = report_text(rep);
  REQUIRE(text.find("class m1: size=1 secrets=0") != std::string::npos);
  REQUIRE(text.find("class m3: size=2 secrets=2-3") != std::string::npos);
  REQUIRE(report_text(oracle_classes(t, direct_1k(), AttackModel::Time)) == text);
}
