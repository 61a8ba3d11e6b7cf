#pragma once

// Counterexample exploration and patch synthesis. Classes of observations
// are explored exhaustively per observation; each feasible trace contributes
// a monitor (a symbolic input condition) and is excluded from further search.
// Patches then equalize every class against one reference observation:
// a miss-count delta for timing attackers, an action schedule computed by
// string alignment for trace attackers.

#include "cachet/metrics.hpp"
#include "cachet/patchdef.hpp"
#include "cachet/verifier.hpp"

namespace cachet {

// ---------------------------------------------------------------------------
// Monitor construction: a self-contained condition over the secret inputs.
// Definitions bind addresses, guards, conflict indicators and miss bits in
// execution order; predicate variables are inlined away.

inline std::vector<MonitorDef> monitor_definitions(const SymbolicSystem& sys) {
  std::vector<MonitorDef> defs;
  std::unordered_map<std::string, Formula> pred_inline;
  for (const auto& p : sys.universe.preds) pred_inline[p.key.name()] = p.rhs;

  for (int i = 1; i <= sys.n; ++i) {
    size_t ix = static_cast<size_t>(i) - 1;
    defs.push_back({"a_" + std::to_string(i), Sort::Bv, sys.addr_rhs[ix]});
    defs.push_back({"g_" + std::to_string(i), Sort::Bool, sys.guard_rhs[ix]});
  }
  size_t eta_pos = 0;
  for (int i = 1; i <= sys.n; ++i) {
    while (eta_pos < sys.etas.size() && sys.etas[eta_pos].i == i) {
      const auto& ev = sys.etas[eta_pos];
      defs.push_back({ev.var->name, Sort::Int,
                      f_ite(subst_vars(ev.cond, pred_inline), f_int(1), f_int(0))});
      ++eta_pos;
    }
    defs.push_back({"m_" + std::to_string(i), Sort::Int,
                    f_ite(subst_vars(sys.gamma_of(i), pred_inline), f_int(1), f_int(0))});
  }
  return defs;
}

// The per-trace condition: same path, same hit/miss bits on executed accesses.
inline Formula monitor_body(const SymbolicSystem& sys, const CexTrace& tr) {
  std::vector<Formula> parts;
  for (int i = 1; i <= sys.n; ++i) {
    size_t ix = static_cast<size_t>(i) - 1;
    Formula g = f_var("g_" + std::to_string(i), Sort::Bool);
    parts.push_back(tr.guards[ix] ? g : f_not(g));
    if (tr.guards[ix])
      parts.push_back(f_eq(f_var("m_" + std::to_string(i), Sort::Int),
                           f_int(tr.miss[ix] ? 1 : 0)));
  }
  return f_and(std::move(parts));
}

inline Monitor extract_monitor(const SymbolicSystem& sys, const CexTrace& tr) {
  return Monitor{monitor_definitions(sys), monitor_body(sys, tr)};
}

// ---------------------------------------------------------------------------
// Trace alignment. Allowed edits when rewriting an observed trace `a` into
// the reference `b`: inject a hit, inject a miss, invalidate (hit -> miss).
// A miss can never be turned back into a hit and events cannot be removed,
// so `b` must embed `a` monotonically with bitwise b >= a.

inline std::optional<std::vector<RuntimeAction>> align_traces(const std::vector<bool>& a,
                                                              const std::vector<bool>& b) {
  const size_t la = a.size(), lb = b.size();
  const int INF = 1 << 28;
  // subs[i][j]: fewest substitutions embedding a[i..] into b[j..]
  std::vector<std::vector<int>> subs(la + 1, std::vector<int>(lb + 1, INF));
  subs[la][lb] = 0;
  for (size_t j = lb; j-- > 0;) subs[la][j] = 0;  // remaining b is inserted
  for (size_t i = la; i-- > 0;) {
    for (size_t j = lb; j-- > 0;) {
      int best = INF;
      if (!(a[i] && !b[j])) {  // miss -> hit is not expressible
        int c = subs[i + 1][j + 1];
        if (c < INF) best = std::min(best, c + ((!a[i] && b[j]) ? 1 : 0));
      }
      if (subs[i][j + 1] < INF) best = std::min(best, subs[i][j + 1]);
      subs[i][j] = best;
    }
  }
  if (subs[0][0] >= INF) return std::nullopt;

  std::vector<RuntimeAction> actions;
  size_t i = 0, j = 0;
  while (j < lb) {
    bool can_match = i < la && !(a[i] && !b[j]) && subs[i + 1][j + 1] < INF &&
                     subs[i + 1][j + 1] + ((!a[i] && b[j]) ? 1 : 0) == subs[i][j];
    bool can_insert = subs[i][j + 1] == subs[i][j];
    bool do_insert;
    if (can_match && can_insert) {
      // inject misses as early as possible, hits as late as possible
      do_insert = b[j];
    } else {
      do_insert = can_insert;
    }
    if (do_insert) {
      actions.push_back(b[j] ? RuntimeAction::inject_miss(static_cast<uint32_t>(i))
                             : RuntimeAction::inject_hit(static_cast<uint32_t>(i)));
      ++j;
    } else {
      if (!a[i] && b[j]) actions.push_back(RuntimeAction::invalidate(static_cast<uint32_t>(i)));
      ++i;
      ++j;
    }
  }
  return actions;
}

// Shortest common supersequence of two observed traces, inserting misses as
// early and hits as late as the alignment allows.
inline std::vector<bool> merge_observations(const std::vector<bool>& a,
                                            const std::vector<bool>& b) {
  const size_t la = a.size(), lb = b.size();
  std::vector<std::vector<int>> lcs(la + 1, std::vector<int>(lb + 1, 0));
  for (size_t i = la; i-- > 0;)
    for (size_t j = lb; j-- > 0;)
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1
                               : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  std::vector<bool> out;
  size_t i = 0, j = 0;
  while (i < la && j < lb) {
    if (a[i] == b[j]) {
      out.push_back(a[i]);
      ++i;
      ++j;
      continue;
    }
    bool take_a_ok = lcs[i + 1][j] == lcs[i][j];
    bool take_b_ok = lcs[i][j + 1] == lcs[i][j];
    if (take_a_ok && take_b_ok) {
      if (a[i]) {
        out.push_back(true);
        ++i;
      } else if (b[j]) {
        out.push_back(true);
        ++j;
      } else {
        out.push_back(false);
        ++i;
      }
    } else if (take_a_ok) {
      out.push_back(a[i]);
      ++i;
    } else {
      out.push_back(b[j]);
      ++j;
    }
  }
  while (i < la) out.push_back(a[i++]);
  while (j < lb) out.push_back(b[j++]);
  return out;
}

// ---------------------------------------------------------------------------
// Class records and synthesis

struct ClassEntry {
  Observation obs;
  std::vector<CexTrace> members;
  std::vector<Formula> member_bodies;  // monitor bodies, one per member
  Monitor merged;                      // defs + disjunction of member bodies
};

inline Monitor merged_monitor(const SymbolicSystem& sys, const ClassEntry& entry) {
  return Monitor{monitor_definitions(sys), f_or(entry.member_bodies)};
}

inline PatchFile synth_time_patches(const std::vector<ClassEntry>& entries) {
  for (auto& e : entries)
    if (e.obs.kind != AttackModel::Time) throw PatchError("mixed observation kinds");
  uint64_t max_count = 0;
  for (auto& e : entries) max_count = std::max(max_count, e.obs.miss_count);
  PatchFile pf;
  pf.model = AttackModel::Time;
  // merge order: the reference class (maximal miss count) first
  std::vector<const ClassEntry*> order;
  for (auto& e : entries)
    if (e.obs.miss_count == max_count) order.push_back(&e);
  for (auto& e : entries)
    if (e.obs.miss_count != max_count) order.push_back(&e);
  for (auto* e : order) {
    Patch p;
    p.model = AttackModel::Time;
    p.monitor = e->merged;
    p.miss_delta = max_count - e->obs.miss_count;
    p.observation = e->obs;
    pf.patches.push_back(std::move(p));
  }
  return pf;
}

struct TraceSynthesis {
  PatchFile patches;
  std::vector<bool> reference;
  std::vector<std::vector<bool>> stepwise_references;  // after each pairwise merge
};

inline TraceSynthesis synth_trace_patches(const std::vector<ClassEntry>& entries) {
  for (auto& e : entries)
    if (e.obs.kind != AttackModel::Trace) throw PatchError("mixed observation kinds");
  if (entries.empty()) throw PatchError("no classes to synthesize from");
  TraceSynthesis out;
  out.reference = entries[0].obs.bits;
  out.stepwise_references.push_back(out.reference);
  for (size_t k = 1; k < entries.size(); ++k) {
    out.reference = merge_observations(out.reference, entries[k].obs.bits);
    out.stepwise_references.push_back(out.reference);
  }
  out.patches.model = AttackModel::Trace;
  for (auto& e : entries) {
    auto actions = align_traces(e.obs.bits, out.reference);
    if (!actions)
      throw PatchError("no common reachable reference observation for class " + e.obs.key());
    Patch p;
    p.model = AttackModel::Trace;
    p.monitor = e.merged;
    p.actions = std::move(*actions);
    p.observation = e.obs;
    out.patches.patches.push_back(std::move(p));
  }
  return out;
}

// Patches realizing only the first k pairwise merges (classes 0..k aligned to
// the k-th stepwise reference); used to check the per-merge capacity drop.
inline PatchFile trace_patch_prefix(const std::vector<ClassEntry>& entries,
                                    const TraceSynthesis& syn, size_t k) {
  PatchFile pf;
  pf.model = AttackModel::Trace;
  const std::vector<bool>& ref = syn.stepwise_references.at(k);
  for (size_t x = 0; x <= k; ++x) {
    auto actions = align_traces(entries[x].obs.bits, ref);
    if (!actions) throw PatchError("prefix reference unreachable");
    Patch p;
    p.model = AttackModel::Trace;
    p.monitor = entries[x].merged;
    p.actions = std::move(*actions);
    p.observation = entries[x].obs;
    pf.patches.push_back(std::move(p));
  }
  return pf;
}

inline PatchFile time_patch_prefix(const PatchFile& full, size_t k) {
  PatchFile pf;
  pf.model = full.model;
  for (size_t x = 0; x < std::min(full.patches.size(), k + 1); ++x)
    pf.patches.push_back(full.patches[x]);
  return pf;
}

// ---------------------------------------------------------------------------
// The monitoring loop: explore every equivalence class of observations,
// extracting monitors and refining the abstraction on spurious traces.

struct MonitoringResult {
  VerificationOutcome cegar;
  bool complete = false;
  std::vector<ClassEntry> entries;  // exploration order
  PatchFile patches;
  std::optional<std::vector<bool>> trace_reference;
  std::vector<std::string> warnings;
};

class PatchSynthesizer {
 public:
  PatchSynthesizer(const SymbolicSystem& sys, Solver& solver, AttackModel model)
      : sys_(sys), solver_(solver), model_(model), verifier_(sys, solver, model) {}

  Verifier& verifier() { return verifier_; }

  MonitoringResult run_monitoring() {
    MonitoringResult res;
    res.cegar = verifier_.run_cegar();
    if (res.cegar.verified()) {
      res.complete = true;
      return res;
    }
    if (!res.cegar.violation()) {
      res.warnings.push_back("verification inconclusive: " + res.cegar.reason);
      return res;
    }
    try {
      explore_class(*res.cegar.tr1, res);
      for (;;) {
        auto seed = next_class(res);
        if (!seed) break;
        explore_class(*seed, res);
      }
      res.complete = true;
    } catch (const VerifierError& e) {
      res.warnings.push_back(e.what());
    }
    if (!res.entries.empty()) {
      for (auto& e : res.entries) e.merged = merged_monitor(sys_, e);
      if (model_ == AttackModel::Time) {
        res.patches = synth_time_patches(res.entries);
      } else {
        TraceSynthesis syn = synth_trace_patches(res.entries);
        res.patches = std::move(syn.patches);
        res.trace_reference = syn.reference;
        last_trace_synthesis_ = std::move(syn);
      }
    }
    return res;
  }

  const TraceSynthesis& last_trace_synthesis() const { return last_trace_synthesis_; }

 private:
  void add_member(ClassEntry& entry, const CexTrace& tr, MonitoringResult&) {
    entry.members.push_back(tr);
    entry.member_bodies.push_back(monitor_body(sys_, tr));
    // exclude this exact trace from all further queries
    verifier_.add_exclusion(verifier_.trace_equals(tr));
  }

  void explore_class(const CexTrace& seed, MonitoringResult& res) {
    ClassEntry entry;
    entry.obs = seed.obs;
    add_member(entry, seed, res);
    auto names = verifier_.model_var_names();
    for (;;) {
      auto asserts = verifier_.abstraction_assertions();
      asserts.push_back(verifier_.observation_equals(entry.obs));
      SolveResult q = solver_.check(asserts, {}, names);
      if (q.unknown()) throw VerifierError("class exploration: " + q.reason);
      if (q.unsat()) break;
      CexTrace tr = verifier_.trace_from_model(q);
      Feasibility f = verifier_.feasibility_check(tr);
      if (f.status == Feasibility::Status::Unknown)
        throw VerifierError("class exploration feasibility: " + f.reason);
      if (f.status == Feasibility::Status::Spurious) {
        verifier_.refine(f.core);
        continue;
      }
      tr.witness_secret = f.secret;
      add_member(entry, tr, res);
    }
    res.entries.push_back(std::move(entry));
  }

  std::optional<CexTrace> next_class(MonitoringResult& res) {
    auto names = verifier_.model_var_names();
    for (;;) {
      auto asserts = verifier_.abstraction_assertions();
      for (auto& e : res.entries) asserts.push_back(verifier_.observation_differs(e.obs));
      SolveResult q = solver_.check(asserts, {}, names);
      if (q.unknown()) throw VerifierError("class search: " + q.reason);
      if (q.unsat()) return std::nullopt;
      CexTrace tr = verifier_.trace_from_model(q);
      Feasibility f = verifier_.feasibility_check(tr);
      if (f.status == Feasibility::Status::Unknown)
        throw VerifierError("class search feasibility: " + f.reason);
      if (f.status == Feasibility::Status::Spurious) {
        verifier_.refine(f.core);
        continue;
      }
      tr.witness_secret = f.secret;
      return tr;
    }
  }

  const SymbolicSystem& sys_;
  Solver& solver_;
  AttackModel model_;
  Verifier verifier_;
  TraceSynthesis last_trace_synthesis_;
};

}  // namespace cachet
