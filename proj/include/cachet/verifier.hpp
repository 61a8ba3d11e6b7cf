#pragma once

// Counterexample-guided abstraction refinement over the cache constraint
// system. A round searches for two traces with different observations under
// the current abstraction, checks both against the full cache semantics, and
// either reports a real violation or refines the tracked predicate set with
// the unsat core of the spurious trace.

#include <chrono>

#include "cachet/oracle.hpp"
#include "cachet/solver.hpp"
#include "cachet/symbolic.hpp"

namespace cachet {

struct VerifierError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Abstraction {
  std::set<PredKey> tracked;
  std::vector<std::vector<PredKey>> history;  // per refinement round
};

struct CexTrace {
  std::vector<bool> miss;    // full length; false where not executed
  std::vector<bool> guards;  // executed flags
  Observation obs;           // over the executed projection
  uint64_t witness_secret = 0;

  std::vector<bool> projected() const {
    std::vector<bool> out;
    for (size_t i = 0; i < miss.size(); ++i)
      if (guards[i]) out.push_back(miss[i]);
    return out;
  }
};

struct VerificationOutcome {
  enum class Kind { Verified, Violation, Inconclusive };
  Kind kind = Kind::Inconclusive;
  int rounds = 0;
  size_t predicates_tracked = 0;
  size_t universe_size = 0;
  std::optional<CexTrace> tr1, tr2;
  std::string reason;
  double wall_ms = 0;

  bool verified() const { return kind == Kind::Verified; }
  bool violation() const { return kind == Kind::Violation; }
};

struct Feasibility {
  enum class Status { Feasible, Spurious, Unknown } status = Status::Unknown;
  uint64_t secret = 0;          // Feasible
  std::vector<PredKey> core;    // Spurious
  std::string reason;           // Unknown
};

class Verifier {
 public:
  Verifier(const SymbolicSystem& sys, Solver& solver, AttackModel model)
      : sys_(sys), solver_(solver), model_(model), space_(sys.trace.secrets) {
    ab_.tracked = initial_abstraction(sys_);
  }

  const Abstraction& abstraction() const { return ab_; }
  void set_tracked(std::set<PredKey> tracked) { ab_.tracked = std::move(tracked); }

  // Formulas excluded from the search (accumulated counterexample monitors).
  void add_exclusion(const Formula& f) { exclusions_.push_back(f); }

  AttackModel model() const { return model_; }
  const SymbolicSystem& system() const { return sys_; }

  // ---- observation encodings -------------------------------------------

  // Prefix counters c_0..c_N with c_i = number of executed accesses among
  // the first i; needed to compare ordered hit/miss projections.
  std::vector<Formula> counter_definitions() const {
    std::vector<Formula> defs;
    defs.push_back(f_eq(counter(0), f_int(0)));
    for (int i = 1; i <= sys_.n; ++i)
      defs.push_back(f_eq(counter(i), f_add({counter(i - 1),
                                             f_ite(sys_.guard_var(i), f_int(1), f_int(0))})));
    return defs;
  }

  Formula observation_equals(const Observation& o) const {
    if (model_ == AttackModel::Time)
      return f_eq(sys_.sum_miss(), f_int(static_cast<int64_t>(o.miss_count)));
    std::vector<Formula> parts;
    size_t len = o.bits.size();
    parts.push_back(f_eq(counter(sys_.n), f_int(static_cast<int64_t>(len))));
    for (int i = 1; i <= sys_.n; ++i) {
      size_t max_pos = std::min<size_t>(static_cast<size_t>(i) - 1, len ? len - 1 : 0);
      for (size_t p = 0; len > 0 && p <= max_pos; ++p) {
        Formula at_p = f_and(sys_.guard_var(i), f_eq(counter(i - 1), f_int(static_cast<int64_t>(p))));
        parts.push_back(f_implies(at_p, f_eq(sys_.miss_var(i), f_int(o.bits[p] ? 1 : 0))));
      }
    }
    return f_and(std::move(parts));
  }

  Formula observation_differs(const Observation& o) const { return f_not(observation_equals(o)); }

  // Pins a full abstract trace (path plus executed miss bits).
  Formula trace_equals(const CexTrace& tr) const {
    std::vector<Formula> parts;
    for (int i = 1; i <= sys_.n; ++i) {
      size_t ix = static_cast<size_t>(i) - 1;
      parts.push_back(tr.guards[ix] ? sys_.guard_var(i) : f_not(sys_.guard_var(i)));
      if (tr.guards[ix])
        parts.push_back(f_eq(sys_.miss_var(i), f_int(tr.miss[ix] ? 1 : 0)));
    }
    return f_and(std::move(parts));
  }

  // ---- queries -----------------------------------------------------------

  std::vector<std::string> model_var_names() const {
    std::vector<std::string> names;
    for (int i = 1; i <= sys_.n; ++i) {
      names.push_back("m_" + std::to_string(i));
      names.push_back("g_" + std::to_string(i));
    }
    for (auto& s : sys_.trace.secrets) names.push_back(s.name);
    return names;
  }

  CexTrace trace_from_model(const SolveResult& res) const {
    CexTrace tr;
    tr.miss.resize(static_cast<size_t>(sys_.n));
    tr.guards.resize(static_cast<size_t>(sys_.n));
    for (int i = 1; i <= sys_.n; ++i) {
      size_t ix = static_cast<size_t>(i) - 1;
      tr.guards[ix] = model_bool(res, "g_" + std::to_string(i));
      tr.miss[ix] = model_int(res, "m_" + std::to_string(i)) == 1;
    }
    tr.obs = observe(model_, tr.projected());
    return tr;
  }

  uint64_t secret_from_model(const SolveResult& res) const {
    std::map<std::string, uint32_t> env;
    for (auto& s : sys_.trace.secrets) {
      auto it = res.model.find(s.name);
      env[s.name] = it == res.model.end() ? 0 : it->second.bv;
    }
    return space_.pack(env);
  }

  std::vector<Formula> abstraction_assertions() const {
    std::vector<Formula> asserts = rewrite(sys_, ab_.tracked);
    if (model_ == AttackModel::Trace) {
      auto defs = counter_definitions();
      asserts.insert(asserts.end(), defs.begin(), defs.end());
    }
    for (auto& e : exclusions_) asserts.push_back(f_not(e));
    return asserts;
  }

  // Checks a trace against the full (fully defined) cache semantics.
  // Definitions are labeled per predicate, trace bits per access; on unsat
  // the core is shrunk to an irreducible label set so the refinement adds
  // exactly the predicates that explain the contradiction.
  Feasibility feasibility_check(const CexTrace& tr) {
    std::vector<Formula> background = sys_.base_assertions();
    for (int i = 1; i <= sys_.n; ++i) {
      size_t ix = static_cast<size_t>(i) - 1;
      background.push_back(tr.guards[ix] ? sys_.guard_var(i) : f_not(sys_.guard_var(i)));
    }
    std::vector<NamedAssertion> named;
    for (const auto& p : sys_.universe.preds)
      named.push_back({p.key.name(), sys_.pred_definition(p.key)});
    for (int i = 1; i <= sys_.n; ++i) {
      size_t ix = static_cast<size_t>(i) - 1;
      if (!tr.guards[ix]) continue;
      named.push_back({"trace_" + std::to_string(i),
                       f_eq(sys_.miss_var(i), f_int(tr.miss[ix] ? 1 : 0))});
    }
    std::vector<std::string> secrets;
    for (auto& s : sys_.trace.secrets) secrets.push_back(s.name);

    SolveResult res = solver_.check(background, named, secrets);
    Feasibility out;
    if (res.unknown()) {
      out.reason = res.reason;
      return out;
    }
    if (res.sat()) {
      out.status = Feasibility::Status::Feasible;
      out.secret = secret_from_model(res);
      return out;
    }
    out.status = Feasibility::Status::Spurious;
    out.core = minimize_core(background, named, res.core);
    return out;
  }

  // ---- refinement ---------------------------------------------------------

  void refine(const std::vector<PredKey>& core_preds) {
    std::vector<PredKey> added;
    for (auto& k : core_preds)
      if (!ab_.tracked.count(k)) added.push_back(k);
    if (added.empty())
      throw VerifierError("refinement stuck: unsat core adds no new predicates");
    for (auto& k : added) ab_.tracked.insert(k);
    ab_.history.push_back(added);
  }

  // ---- the CEGAR loop -------------------------------------------------------

  VerificationOutcome run_cegar() {
    auto t0 = std::chrono::steady_clock::now();
    VerificationOutcome out;
    out.universe_size = sys_.universe.size();
    auto names = model_var_names();
    for (;;) {
      ++out.rounds;
      auto asserts = abstraction_assertions();
      SolveResult q1 = solver_.check(asserts, {}, names);
      if (q1.unknown()) return finish(inconclusive(out, q1.reason), t0);
      if (q1.unsat()) {
        out.kind = VerificationOutcome::Kind::Verified;
        return finish(out, t0);
      }
      CexTrace tr1 = trace_from_model(q1);

      auto asserts2 = asserts;
      asserts2.push_back(observation_differs(tr1.obs));
      SolveResult q2 = solver_.check(asserts2, {}, names);
      if (q2.unknown()) return finish(inconclusive(out, q2.reason), t0);
      if (q2.unsat()) {
        out.kind = VerificationOutcome::Kind::Verified;
        return finish(out, t0);
      }
      CexTrace tr2 = trace_from_model(q2);

      Feasibility f1 = feasibility_check(tr1);
      if (f1.status == Feasibility::Status::Unknown)
        return finish(inconclusive(out, "feasibility check: " + f1.reason), t0);
      Feasibility f2 = feasibility_check(tr2);
      if (f2.status == Feasibility::Status::Unknown)
        return finish(inconclusive(out, "feasibility check: " + f2.reason), t0);

      if (f1.status == Feasibility::Status::Feasible &&
          f2.status == Feasibility::Status::Feasible) {
        tr1.witness_secret = f1.secret;
        tr2.witness_secret = f2.secret;
        cross_check_witness(tr1);
        cross_check_witness(tr2);
        out.kind = VerificationOutcome::Kind::Violation;
        out.tr1 = tr1;
        out.tr2 = tr2;
        return finish(out, t0);
      }

      std::vector<PredKey> cores;
      if (f1.status == Feasibility::Status::Spurious)
        cores.insert(cores.end(), f1.core.begin(), f1.core.end());
      if (f2.status == Feasibility::Status::Spurious)
        cores.insert(cores.end(), f2.core.begin(), f2.core.end());
      try {
        refine(cores);
      } catch (const VerifierError& e) {
        return finish(inconclusive(out, e.what()), t0);
      }
    }
  }

  // The last spurious core seen in round 1 (for walkthrough inspection).
  const std::vector<PredKey>& last_core() const {
    return ab_.history.empty() ? empty_core_ : ab_.history.back();
  }

 private:
  Formula counter(int i) const { return f_var("c_" + std::to_string(i), Sort::Int); }

  static bool model_bool(const SolveResult& res, const std::string& name) {
    auto it = res.model.find(name);
    if (it == res.model.end()) throw VerifierError("model is missing variable " + name);
    return it->second.b;
  }
  static int64_t model_int(const SolveResult& res, const std::string& name) {
    auto it = res.model.find(name);
    if (it == res.model.end()) throw VerifierError("model is missing variable " + name);
    return it->second.i;
  }

  VerificationOutcome inconclusive(VerificationOutcome out, const std::string& why) {
    out.kind = VerificationOutcome::Kind::Inconclusive;
    out.reason = why;
    return out;
  }

  VerificationOutcome finish(VerificationOutcome out,
                             std::chrono::steady_clock::time_point t0) {
    out.predicates_tracked = ab_.tracked.size();
    out.universe_size = sys_.universe.size();
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    return out;
  }

  // A feasible witness must reproduce its trace and observation concretely.
  void cross_check_witness(const CexTrace& tr) const {
    Execution ex = execute(sys_.trace, sys_.cfg, space_.unpack(tr.witness_secret));
    if (observe(model_, ex.misses) != tr.obs)
      throw VerifierError("internal error: witness does not reproduce its observation");
  }

  std::vector<PredKey> minimize_core(const std::vector<Formula>& background,
                                     const std::vector<NamedAssertion>& named,
                                     const std::vector<std::string>& core_labels) {
    std::set<std::string> core(core_labels.begin(), core_labels.end());
    // deletion-based minimization over predicate labels, in canonical order
    std::vector<std::string> candidates;
    for (auto& na : named)
      if (core.count(na.label) && na.label.rfind("p_", 0) == 0) candidates.push_back(na.label);
    for (auto& cand : candidates) {
      std::set<std::string> trial = core;
      trial.erase(cand);
      std::vector<NamedAssertion> subset;
      for (auto& na : named)
        if (trial.count(na.label)) subset.push_back(na);
      SolveResult r = solver_.check(background, subset, {});
      if (r.unsat()) core = std::move(trial);
    }
    std::vector<PredKey> preds;
    for (const auto& p : sys_.universe.preds)
      if (core.count(p.key.name())) preds.push_back(p.key);
    return preds;
  }

  const SymbolicSystem& sys_;
  Solver& solver_;
  AttackModel model_;
  SecretSpace space_;
  Abstraction ab_;
  std::vector<Formula> exclusions_;
  std::vector<PredKey> empty_core_;
};

// ---------------------------------------------------------------------------
// Structured verdict report

inline std::string verdict_name(VerificationOutcome::Kind k) {
  switch (k) {
    case VerificationOutcome::Kind::Verified:
      return "verified";
    case VerificationOutcome::Kind::Violation:
      return "violation";
    case VerificationOutcome::Kind::Inconclusive:
      return "inconclusive";
  }
  return "?";
}

inline std::string secret_text(const std::vector<SecretDecl>& secrets, uint64_t packed) {
  SecretSpace space(secrets);
  auto env = space.unpack(packed);
  std::ostringstream os;
  bool first = true;
  for (auto& s : secrets) {
    if (!first) os << ',';
    first = false;
    os << s.name << '=' << env[s.name];
  }
  return os.str();
}

inline std::string verdict_report(const VerificationOutcome& out, const SymbolicSystem& sys,
                                  AttackModel model, bool with_timing = false) {
  std::ostringstream os;
  os << "verdict: " << verdict_name(out.kind) << "\n";
  os << "model: " << attack_model_name(model) << "\n";
  os << "policy: " << policy_name(sys.cfg.policy) << "\n";
  os << "rounds: " << out.rounds << "\n";
  os << "predicates_tracked: " << out.predicates_tracked << "\n";
  os << "predicates_total: " << out.universe_size << "\n";
  if (out.tr1 && out.tr2) {
    // canonical witness order for report stability
    const CexTrace* a = &*out.tr1;
    const CexTrace* b = &*out.tr2;
    if (b->obs < a->obs) std::swap(a, b);
    for (const CexTrace* t : {a, b}) {
      os << "witness: secret=" << secret_text(sys.trace.secrets, t->witness_secret)
         << " observation=" << t->obs.key() << "\n";
    }
  }
  if (!out.reason.empty()) os << "reason: " << out.reason << "\n";
  if (with_timing) os << "wall_ms: " << out.wall_ms << "\n";
  return os.str();
}

}  // namespace cachet
