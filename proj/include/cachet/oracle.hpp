#pragma once

// Exhaustive concrete oracle: runs every secret assignment through the
// simulator, applies patches if given, and groups the secret domain into
// observation equivalence classes.

#include <iomanip>

#include "cachet/cache.hpp"
#include "cachet/patchdef.hpp"
#include "cachet/trace.hpp"

namespace cachet {

// One concrete execution: executed mask, per-executed block ids, miss bits.
struct Execution {
  std::vector<bool> executed;       // per access site (length N)
  std::vector<bool> miss_full;      // per access site; false where not executed
  std::vector<uint64_t> blocks;     // executed accesses only, in order
  std::vector<bool> misses;         // executed accesses only, in order
};

inline Execution execute(const UnrolledTrace& t, const CacheConfig& cfg,
                         const std::map<std::string, uint32_t>& secret_env) {
  Execution ex;
  ConcreteRun run = run_trace(t, secret_env);
  ex.executed = run.executed;
  for (size_t i = 0; i < t.size(); ++i)
    if (run.executed[i]) ex.blocks.push_back(map_address(cfg, run.addrs[i]).block);
  ex.misses = simulate(cfg, ex.blocks);
  ex.miss_full.resize(t.size(), false);
  size_t j = 0;
  for (size_t i = 0; i < t.size(); ++i)
    if (run.executed[i]) ex.miss_full[i] = ex.misses[j++];
  return ex;
}

// Applies the first matching patch (if any) to an execution's observation.
inline Observation observe_patched(const Execution& ex, AttackModel model,
                                   const std::vector<Patch>& patches,
                                   const std::map<std::string, uint32_t>& secret_env) {
  for (const Patch& p : patches) {
    if (!p.monitor.eval_on(secret_env)) continue;
    if (model == AttackModel::Time) {
      Observation o = observe(model, ex.misses);
      o.miss_count += p.miss_delta;
      return o;
    }
    return observe(model, apply_actions(ex.misses, p.actions, ex.blocks));
  }
  return observe(model, ex.misses);
}

struct OracleReport {
  CacheConfig cfg;
  AttackModel model = AttackModel::Time;
  std::vector<SecretDecl> secrets;
  std::map<Observation, std::vector<uint64_t>> classes;  // packed secrets, sorted
  std::map<uint64_t, uint64_t> miss_counts;              // packed secret -> miss count

  uint64_t domain_size() const {
    uint64_t bits = 0;
    for (auto& s : secrets) bits += s.width;
    return 1ull << bits;
  }
};

inline OracleReport oracle_classes(const UnrolledTrace& t, const CacheConfig& cfg,
                                   AttackModel model,
                                   const std::vector<Patch>* patches = nullptr) {
  SecretSpace space(t.secrets);
  space.require_enumerable();
  OracleReport rep;
  rep.cfg = cfg;
  rep.model = model;
  rep.secrets = t.secrets;
  space.for_each([&](uint64_t packed, const std::map<std::string, uint32_t>& env) {
    Execution ex = execute(t, cfg, env);
    Observation o = patches ? observe_patched(ex, model, *patches, env)
                            : observe(model, ex.misses);
    rep.classes[o].push_back(packed);
    uint64_t mc = 0;
    for (bool m : ex.misses) mc += m ? 1 : 0;
    rep.miss_counts[packed] = mc;
  });
  return rep;
}

// Serialization with sorted class keys, members as compact ranges.
inline std::string ranges_text(const std::vector<uint64_t>& sorted_members) {
  std::ostringstream os;
  size_t i = 0;
  bool first = true;
  while (i < sorted_members.size()) {
    size_t j = i;
    while (j + 1 < sorted_members.size() && sorted_members[j + 1] == sorted_members[j] + 1) ++j;
    if (!first) os << ',';
    first = false;
    if (j == i)
      os << sorted_members[i];
    else
      os << sorted_members[i] << '-' << sorted_members[j];
    i = j + 1;
  }
  return os.str();
}

inline std::string report_text(const OracleReport& rep) {
  std::ostringstream os;
  os << "policy: " << policy_name(rep.cfg.policy) << "\n";
  os << "sets: " << rep.cfg.num_sets << "\n";
  os << "line_size: " << rep.cfg.line_size << "\n";
  os << "assoc: " << rep.cfg.assoc << "\n";
  os << "model: " << attack_model_name(rep.model) << "\n";
  os << "secrets:";
  for (auto& s : rep.secrets) os << ' ' << s.name << ":u" << s.width;
  os << "\n";
  os << "classes: " << rep.classes.size() << "\n";
  for (auto& [obs, members] : rep.classes) {
    os << "class " << obs.key() << ": size=" << members.size()
       << " secrets=" << ranges_text(members) << "\n";
  }
  return os.str();
}

}  // namespace cachet
