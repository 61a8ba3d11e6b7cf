#pragma once

// Cache geometry, exact replacement-policy simulation and attacker
// observations. The simulator is the concrete ground truth the symbolic
// encoding is checked against.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cachet {

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ActionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Policy { DirectMapped, Lru, Fifo };

inline const char* policy_name(Policy p) {
  switch (p) {
    case Policy::DirectMapped:
      return "direct";
    case Policy::Lru:
      return "lru";
    case Policy::Fifo:
      return "fifo";
  }
  return "?";
}

struct CacheConfig {
  uint32_t num_sets = 32;
  uint32_t line_size = 32;
  uint32_t assoc = 1;
  Policy policy = Policy::DirectMapped;

  static bool power_of_two(uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

  void validate() const {
    if (!power_of_two(num_sets)) throw CacheError("sets must be a power of two");
    if (!power_of_two(line_size)) throw CacheError("line_size must be a power of two");
    if (assoc == 0) throw CacheError("assoc must be at least 1");
    if ((policy == Policy::DirectMapped) != (assoc == 1))
      throw CacheError("direct-mapped caches have assoc 1 and vice versa");
  }

  uint32_t set_bits() const {
    uint32_t b = 0;
    while ((1u << b) < num_sets) ++b;
    return b;
  }
  uint32_t block_bits() const {
    uint32_t b = 0;
    while ((1u << b) < line_size) ++b;
    return b;
  }
};

// Structured text config: `key = value` or `key: value` lines, `#` comments.
inline CacheConfig parse_cache_config(const std::string& text) {
  CacheConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool saw_policy = false;
  uint32_t assoc_seen = 1;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto sep = line.find_first_of(":=");
    if (sep == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw CacheError("cache config line " + std::to_string(lineno) + ": expected key=value");
      continue;
    }
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, sep));
    std::string val = trim(line.substr(sep + 1));
    if (key == "policy") {
      if (val == "direct")
        cfg.policy = Policy::DirectMapped;
      else if (val == "lru")
        cfg.policy = Policy::Lru;
      else if (val == "fifo")
        cfg.policy = Policy::Fifo;
      else
        throw CacheError("unknown policy '" + val + "'");
      saw_policy = true;
    } else {
      uint64_t v = 0;
      try {
        v = std::stoull(val, nullptr, 0);
      } catch (...) {
        throw CacheError("bad value for '" + key + "'");
      }
      if (key == "sets")
        cfg.num_sets = static_cast<uint32_t>(v);
      else if (key == "line_size")
        cfg.line_size = static_cast<uint32_t>(v);
      else if (key == "assoc")
        assoc_seen = static_cast<uint32_t>(v);
      else
        throw CacheError("unknown cache config key '" + key + "'");
    }
  }
  cfg.assoc = assoc_seen;
  if (!saw_policy) cfg.policy = cfg.assoc == 1 ? Policy::DirectMapped : Policy::Lru;
  // an associativity-1 lru/fifo cache behaves exactly like direct-mapped
  if (cfg.assoc == 1) cfg.policy = Policy::DirectMapped;
  cfg.validate();
  return cfg;
}

struct BlockLoc {
  uint64_t block = 0;
  uint32_t set = 0;
  uint64_t tag = 0;
};

inline BlockLoc map_address(const CacheConfig& cfg, uint64_t addr) {
  BlockLoc loc;
  loc.block = addr >> cfg.block_bits();
  loc.set = static_cast<uint32_t>(loc.block & (cfg.num_sets - 1));
  loc.tag = loc.block >> cfg.set_bits();
  return loc;
}

// Exact simulation over a block-id sequence; cache starts empty.
// LRU reorders on hit; FIFO leaves state untouched on hit; direct-mapped
// keeps one block per set.
inline std::vector<bool> simulate(const CacheConfig& cfg, const std::vector<uint64_t>& blocks) {
  std::map<uint32_t, std::deque<uint64_t>> sets;  // front = most recently inserted
  std::vector<bool> misses;
  misses.reserve(blocks.size());
  for (uint64_t b : blocks) {
    uint32_t set = static_cast<uint32_t>(b & (cfg.num_sets - 1));
    auto& ways = sets[set];
    auto it = std::find(ways.begin(), ways.end(), b);
    if (it != ways.end()) {
      misses.push_back(false);
      if (cfg.policy == Policy::Lru) {
        ways.erase(it);
        ways.push_front(b);
      }
      continue;
    }
    misses.push_back(true);
    ways.push_front(b);
    if (ways.size() > cfg.assoc) ways.pop_back();
  }
  return misses;
}

// ---------------------------------------------------------------------------
// Attacker observations

enum class AttackModel { Time, Trace };

inline const char* attack_model_name(AttackModel m) {
  return m == AttackModel::Time ? "time" : "trace";
}

struct Observation {
  AttackModel kind = AttackModel::Time;
  uint64_t miss_count = 0;      // Time
  std::vector<bool> bits;       // Trace; true = miss

  std::string key() const {
    if (kind == AttackModel::Time) return "m" + std::to_string(miss_count);
    std::string s;
    s.reserve(bits.size());
    for (bool b : bits) s += b ? '1' : '0';
    return "t" + s;
  }

  bool operator==(const Observation& o) const {
    if (kind != o.kind) return false;
    return kind == AttackModel::Time ? miss_count == o.miss_count : bits == o.bits;
  }
  bool operator!=(const Observation& o) const { return !(*this == o); }
  bool operator<(const Observation& o) const {
    if (kind != o.kind) return kind < o.kind;
    if (kind == AttackModel::Time) return miss_count < o.miss_count;
    if (bits.size() != o.bits.size()) return bits.size() < o.bits.size();
    return bits < o.bits;
  }
};

inline Observation observe(AttackModel model, const std::vector<bool>& misses) {
  Observation o;
  o.kind = model;
  if (model == AttackModel::Time) {
    for (bool m : misses) o.miss_count += m ? 1 : 0;
  } else {
    o.bits = misses;
  }
  return o;
}

// ---------------------------------------------------------------------------
// Runtime actions

struct RuntimeAction {
  enum class Kind { InjectMiss, InjectHit, Invalidate };
  Kind kind = Kind::InjectMiss;
  uint32_t at = 0;                    // count of original instructions executed
  std::optional<uint64_t> block;      // Invalidate: explicit target block

  static RuntimeAction inject_miss(uint32_t at) { return {Kind::InjectMiss, at, std::nullopt}; }
  static RuntimeAction inject_hit(uint32_t at) { return {Kind::InjectHit, at, std::nullopt}; }
  static RuntimeAction invalidate(uint32_t at, std::optional<uint64_t> block = std::nullopt) {
    return {Kind::Invalidate, at, block};
  }
};

// Applies a schedule of runtime actions to an observed hit/miss trace.
// Positions count original executed accesses; injections add attacker-visible
// positions, invalidation turns the next access to the target block (or, with
// no explicit block, the access at that position) from hit to miss. Injected
// events never change cache state, so the original bits are kept as-is.
inline std::vector<bool> apply_actions(const std::vector<bool>& misses,
                                       const std::vector<RuntimeAction>& actions,
                                       const std::vector<uint64_t>& blocks = {}) {
  for (size_t k = 0; k + 1 < actions.size(); ++k)
    if (actions[k].at > actions[k + 1].at)
      throw ActionError("actions must be sorted by instruction count");
  std::vector<bool> adjusted = misses;

  // invalidations first: they substitute bits of the original trace
  for (const auto& act : actions) {
    if (act.kind != RuntimeAction::Kind::Invalidate) continue;
    if (act.block) {
      if (blocks.size() != misses.size())
        throw ActionError("invalidation by block needs the per-access block ids");
      bool found = false;
      for (size_t i = act.at; i < blocks.size(); ++i) {
        if (blocks[i] == *act.block) {
          adjusted[i] = true;
          found = true;
          break;
        }
      }
      if (!found) throw ActionError("invalidated block is never accessed");
    } else {
      if (act.at >= adjusted.size()) throw ActionError("invalidation past end of trace");
      adjusted[act.at] = true;
    }
  }

  // then injections, walking the original positions
  std::vector<bool> out;
  out.reserve(adjusted.size() + actions.size());
  size_t ai = 0;
  for (uint32_t pos = 0; pos <= adjusted.size(); ++pos) {
    while (ai < actions.size() && actions[ai].at == pos) {
      const auto& act = actions[ai];
      if (act.kind == RuntimeAction::Kind::InjectMiss) {
        out.push_back(true);
      } else if (act.kind == RuntimeAction::Kind::InjectHit) {
        if (act.at == 0) throw ActionError("cannot inject a hit before any access");
        out.push_back(false);
      }
      ++ai;
    }
    if (pos < adjusted.size()) out.push_back(adjusted[pos]);
  }
  if (ai < actions.size()) throw ActionError("action position past end of trace");
  return out;
}

}  // namespace cachet
