#pragma once

// Symbolic execution over the unrolled trace: program semantics in
// single-assignment form, the set/tag predicate universe, and the
// per-policy hit/miss conditions wired to the miss variables.
//
// Predicates are reified as free boolean variables; "tracking" one means
// asserting its defining formula. Rewriting under an abstraction is then a
// matter of choosing which definitions to assert.

#include <set>

#include "cachet/cache.hpp"
#include "cachet/formula.hpp"
#include "cachet/trace.hpp"

namespace cachet {

struct SymbolicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PredKey {
  enum class Kind { Set, Tag };
  Kind kind = Kind::Set;
  int j = 0, i = 0;  // 1-based access indices, j < i

  std::string name() const {
    return std::string("p_") + (kind == Kind::Set ? "set" : "tag") + "_" + std::to_string(j) +
           "_" + std::to_string(i);
  }
  bool operator<(const PredKey& o) const {
    if (i != o.i) return i < o.i;
    if (j != o.j) return j < o.j;
    return kind < o.kind;
  }
  bool operator==(const PredKey& o) const { return kind == o.kind && j == o.j && i == o.i; }
};

struct PredInfo {
  PredKey key;
  Formula var;               // free boolean
  Formula rhs;               // defining formula over the address variables
  std::optional<bool> folded;  // truth value when both addresses are static
};

struct PredicateUniverse {
  std::vector<PredInfo> preds;  // ordered by (i, j, kind)
  std::map<PredKey, size_t> index;

  const PredInfo& at(const PredKey& k) const {
    auto it = index.find(k);
    if (it == index.end()) throw SymbolicError("unknown predicate " + k.name());
    return preds[it->second];
  }
  size_t size() const { return preds.size(); }
};

namespace detail {

inline Formula expr_to_bv(const ExprPtr& e);

inline Formula expr_to_bool(const ExprPtr& e) {
  switch (e->op) {
    case ExprOp::Const:
      return f_bool(e->value != 0);
    case ExprOp::Eq:
      return f_eq(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Ne:
      return f_ne(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Lt:
      return f_ult(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Le:
      return f_ule(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Gt:
      return f_ugt(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Ge:
      return f_uge(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Not:
      return f_not(expr_to_bool(e->args[0]));
    case ExprOp::LAnd:
      return f_and(expr_to_bool(e->args[0]), expr_to_bool(e->args[1]));
    case ExprOp::Ite:
      return f_ite(expr_to_bool(e->args[0]), expr_to_bool(e->args[1]),
                   expr_to_bool(e->args[2]));
    default:
      return f_ne(expr_to_bv(e), f_bv(0));
  }
}

inline Formula expr_to_bv(const ExprPtr& e) {
  switch (e->op) {
    case ExprOp::Const:
      return f_bv(e->value);
    case ExprOp::Ref:
      return f_var(e->name, Sort::Bv);
    case ExprOp::Add:
      return f_bvadd(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Sub:
      return f_bvsub(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Mul:
      return f_bvmul(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::BitAnd:
      return f_bvand(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::BitOr:
      return f_bvor(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::BitXor:
      return f_bvxor(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Shl:
      return f_bvshl(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Shr:
      return f_bvlshr(expr_to_bv(e->args[0]), expr_to_bv(e->args[1]));
    case ExprOp::Ite:
      return f_ite(expr_to_bool(e->args[0]), expr_to_bv(e->args[1]), expr_to_bv(e->args[2]));
    default:
      // comparisons and logical nodes yield 0/1
      return f_ite(expr_to_bool(e), f_bv(1), f_bv(0));
  }
}

}  // namespace detail

struct SymbolicSystem {
  UnrolledTrace trace;
  CacheConfig cfg;
  int n = 0;

  std::vector<Formula> secret_vars;
  std::vector<Formula> guard_vars;   // g_i : Bool
  std::vector<Formula> addr_vars;    // a_i : Bv
  std::vector<Formula> miss_vars;    // m_i : Int
  std::vector<Formula> guard_rhs;    // over secrets
  std::vector<Formula> addr_rhs;     // over secrets
  std::vector<Formula> gamma;        // miss condition per access

  struct EtaVar {
    int j = 0, i = 0;
    Formula var;   // cf_j_i : Int, 1 iff r_j inflicts a unique conflict on r_i
    Formula cond;  // over predicates/guards/miss vars
  };
  std::vector<EtaVar> etas;

  PredicateUniverse universe;

  std::vector<Formula> program_semantics;  // secret ranges, guard/addr definitions
  std::vector<Formula> cache_equiv;        // gamma <=> miss bindings
  std::vector<Formula> eta_asserts;        // conflict indicator implications

  Formula guard_var(int i) const { return guard_vars[static_cast<size_t>(i) - 1]; }
  Formula addr_var(int i) const { return addr_vars[static_cast<size_t>(i) - 1]; }
  Formula miss_var(int i) const { return miss_vars[static_cast<size_t>(i) - 1]; }
  Formula gamma_of(int i) const { return gamma[static_cast<size_t>(i) - 1]; }

  Formula pred_var(PredKey::Kind kind, int j, int i) const {
    return universe.at(PredKey{kind, j, i}).var;
  }
  Formula pset(int j, int i) const { return pred_var(PredKey::Kind::Set, j, i); }
  Formula ptag(int j, int i) const { return pred_var(PredKey::Kind::Tag, j, i); }

  // All assertions that hold regardless of the abstraction.
  std::vector<Formula> base_assertions() const {
    std::vector<Formula> out = program_semantics;
    out.insert(out.end(), cache_equiv.begin(), cache_equiv.end());
    out.insert(out.end(), eta_asserts.begin(), eta_asserts.end());
    return out;
  }

  Formula pred_definition(const PredKey& k) const {
    const PredInfo& p = universe.at(k);
    return f_iff(p.var, p.rhs);
  }

  Formula sum_miss() const {
    std::vector<Formula> ms = miss_vars;
    return f_add(std::move(ms));
  }
};

namespace detail {

struct GammaBuilder {
  SymbolicSystem& sys;

  Formula theta_cold(int i) {
    std::vector<Formula> cls;
    for (int j = 1; j < i; ++j)
      cls.push_back(f_or({f_not(sys.pset(j, i)), sys.ptag(j, i), f_not(sys.guard_var(j))}));
    return f_and(std::move(cls));
  }

  Formula phi_cnf_dir(int j, int i) { return f_and(sys.ptag(j, i), sys.pset(j, i)); }

  Formula phi_rel_dir(int j, int i) {
    std::vector<Formula> cls;
    for (int k = j + 1; k < i; ++k)
      cls.push_back(f_or({sys.ptag(k, i), f_not(sys.pset(k, i)), f_not(sys.guard_var(k))}));
    return f_and(std::move(cls));
  }

  Formula build_direct(int i) {
    std::vector<Formula> conflicts;
    for (int j = 1; j < i; ++j)
      conflicts.push_back(f_and({phi_cnf_dir(j, i), phi_rel_dir(j, i), sys.guard_var(j)}));
    return f_and(sys.guard_var(i), f_or(theta_cold(i), f_or(std::move(conflicts))));
  }

  Formula miss_of(int k) { return f_eq(sys.miss_var(k), f_int(1)); }

  Formula build_assoc(int i, Policy policy) {
    std::vector<Formula> eta_sum;
    for (int j = 1; j < i; ++j) {
      Formula cnf, rel, eqv;
      if (policy == Policy::Lru) {
        cnf = phi_cnf_dir(j, i);
        rel = phi_rel_dir(j, i);
        std::vector<Formula> cls;
        for (int k = j + 1; k < i; ++k)
          cls.push_back(f_or({sys.ptag(j, k), f_not(sys.pset(j, k)), f_not(sys.guard_var(k))}));
        eqv = f_and(std::move(cls));
      } else {  // FIFO: only misses change the cache state
        cnf = f_and({sys.ptag(j, i), sys.pset(j, i), miss_of(j)});
        std::vector<Formula> rel_cls, eqv_cls;
        for (int k = j + 1; k < i; ++k) {
          rel_cls.push_back(f_or({sys.ptag(k, i), f_not(sys.pset(k, i)),
                                  f_not(sys.guard_var(k)), f_not(miss_of(k))}));
          eqv_cls.push_back(f_or({sys.ptag(j, k), f_not(sys.pset(j, k)),
                                  f_not(sys.guard_var(k)), f_not(miss_of(k))}));
        }
        rel = f_and(std::move(rel_cls));
        eqv = f_and(std::move(eqv_cls));
      }
      Formula cond = f_and({cnf, rel, eqv, sys.guard_var(j)});
      Formula var = f_var("cf_" + std::to_string(j) + "_" + std::to_string(i), Sort::Int);
      sys.etas.push_back({j, i, var, cond});
      sys.eta_asserts.push_back(f_implies(cond, f_eq(var, f_int(1))));
      sys.eta_asserts.push_back(f_implies(f_not(cond), f_eq(var, f_int(0))));
      eta_sum.push_back(var);
    }
    Formula overflow = f_ge(f_add(std::move(eta_sum)), f_int(static_cast<int64_t>(sys.cfg.assoc)));
    return f_and(sys.guard_var(i), f_or(theta_cold(i), overflow));
  }
};

}  // namespace detail

inline size_t count_formula_nodes(const Formula& f, std::set<const FNode*>& seen) {
  if (!seen.insert(f.get()).second) return 0;
  size_t n = 1;
  for (auto& a : f->args) n += count_formula_nodes(a, seen);
  return n;
}

inline SymbolicSystem execute_symbolic(const UnrolledTrace& trace, const CacheConfig& cfg,
                                       size_t node_limit = 20'000'000) {
  cfg.validate();
  SymbolicSystem sys;
  sys.trace = trace;
  sys.cfg = cfg;
  sys.n = static_cast<int>(trace.size());

  for (auto& s : trace.secrets) {
    Formula v = f_var(s.name, Sort::Bv);
    sys.secret_vars.push_back(v);
    if (s.width < 32)
      sys.program_semantics.push_back(f_ult(v, f_bv(1u << s.width)));
  }

  uint32_t b_bits = cfg.block_bits();
  uint32_t s_bits = cfg.set_bits();
  auto set_of = [&](const Formula& a) {
    return f_bvand(f_bvlshr(a, f_bv(b_bits)), f_bv(cfg.num_sets - 1));
  };
  auto tag_of = [&](const Formula& a) { return f_bvlshr(a, f_bv(b_bits + s_bits)); };

  for (int i = 1; i <= sys.n; ++i) {
    const AccessSite& site = trace.accesses[static_cast<size_t>(i) - 1];
    Formula g = f_var("g_" + std::to_string(i), Sort::Bool);
    Formula a = f_var("a_" + std::to_string(i), Sort::Bv);
    Formula m = f_var("m_" + std::to_string(i), Sort::Int);
    sys.guard_vars.push_back(g);
    sys.addr_vars.push_back(a);
    sys.miss_vars.push_back(m);
    sys.guard_rhs.push_back(detail::expr_to_bool(site.guard));
    sys.addr_rhs.push_back(detail::expr_to_bv(site.addr));
    sys.program_semantics.push_back(f_iff(g, sys.guard_rhs.back()));
    sys.program_semantics.push_back(f_eq(a, sys.addr_rhs.back()));
  }

  // predicate universe over all pairs j < i
  for (int i = 2; i <= sys.n; ++i) {
    for (int j = 1; j < i; ++j) {
      const AccessSite& sj = trace.accesses[static_cast<size_t>(j) - 1];
      const AccessSite& si = trace.accesses[static_cast<size_t>(i) - 1];
      for (auto kind : {PredKey::Kind::Set, PredKey::Kind::Tag}) {
        PredInfo p;
        p.key = {kind, j, i};
        p.var = f_var(p.key.name(), Sort::Bool);
        Formula lhs = kind == PredKey::Kind::Set ? set_of(sys.addr_var(j)) : tag_of(sys.addr_var(j));
        Formula rhs = kind == PredKey::Kind::Set ? set_of(sys.addr_var(i)) : tag_of(sys.addr_var(i));
        p.rhs = kind == PredKey::Kind::Set ? f_eq(lhs, rhs) : f_ne(lhs, rhs);
        if (sj.static_addr && si.static_addr) {
          BlockLoc lj = map_address(cfg, *sj.static_addr);
          BlockLoc li = map_address(cfg, *si.static_addr);
          p.folded = kind == PredKey::Kind::Set ? (lj.set == li.set) : (lj.tag != li.tag);
        }
        sys.universe.index[p.key] = sys.universe.preds.size();
        sys.universe.preds.push_back(std::move(p));
      }
    }
  }

  detail::GammaBuilder gb{sys};
  for (int i = 1; i <= sys.n; ++i) {
    Formula gi = cfg.policy == Policy::DirectMapped ? gb.build_direct(i)
                                                    : gb.build_assoc(i, cfg.policy);
    sys.gamma.push_back(gi);
    sys.cache_equiv.push_back(f_iff(gi, f_eq(sys.miss_var(i), f_int(1))));
    sys.cache_equiv.push_back(f_iff(f_not(gi), f_eq(sys.miss_var(i), f_int(0))));
  }

  std::set<const FNode*> seen;
  size_t nodes = 0;
  for (auto& f : sys.base_assertions()) nodes += count_formula_nodes(f, seen);
  if (nodes > node_limit)
    throw SymbolicError("constraint system exceeds node limit (" + std::to_string(nodes) + ")");
  return sys;
}

// Predicates whose values are statically determined: both endpoints have
// constant addresses and every earlier access is constant-addressed and
// unconditionally executed.
inline std::set<PredKey> initial_abstraction(const SymbolicSystem& sys) {
  std::set<PredKey> out;
  std::vector<bool> prefix_static(static_cast<size_t>(sys.n) + 1, true);
  for (int i = 1; i <= sys.n; ++i) {
    const AccessSite& s = sys.trace.accesses[static_cast<size_t>(i) - 1];
    prefix_static[static_cast<size_t>(i)] =
        prefix_static[static_cast<size_t>(i) - 1] && s.static_addr.has_value() &&
        s.guard_const_true;
  }
  for (const auto& p : sys.universe.preds) {
    const AccessSite& sj = sys.trace.accesses[static_cast<size_t>(p.key.j) - 1];
    const AccessSite& si = sys.trace.accesses[static_cast<size_t>(p.key.i) - 1];
    if (sj.static_addr && si.static_addr && prefix_static[static_cast<size_t>(p.key.i) - 1])
      out.insert(p.key);
  }
  return out;
}

// The abstraction-applied constraint system: base assertions plus the
// defining formulas of tracked predicates. Untracked predicates stay free.
inline std::vector<Formula> rewrite(const SymbolicSystem& sys, const std::set<PredKey>& tracked) {
  std::vector<Formula> out = sys.base_assertions();
  for (const auto& k : tracked) out.push_back(sys.pred_definition(k));
  return out;
}

inline Formula rewrite_conjoined(const SymbolicSystem& sys, const std::set<PredKey>& tracked) {
  return f_and(rewrite(sys, tracked));
}

// Debug dump: every predicate (name, j, i, kind, folded value when static)
// followed by the per-access miss conditions.
inline std::string debug_dump(const SymbolicSystem& sys) {
  std::ostringstream os;
  for (const auto& p : sys.universe.preds) {
    os << p.key.name() << " j=" << p.key.j << " i=" << p.key.i << " kind="
       << (p.key.kind == PredKey::Kind::Set ? "set" : "tag");
    if (p.folded) os << " folded=" << (*p.folded ? "true" : "false");
    os << "\n";
  }
  for (int i = 1; i <= sys.n; ++i)
    os << "gamma_" << i << ": " << to_smt(sys.gamma_of(i)) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Concrete grounding: evaluate the full system under one secret assignment.
// Used to cross-check the encoding against the simulator.

struct GroundedRun {
  std::vector<bool> guards;
  std::vector<bool> misses;
  Env env;  // full valuation, including predicates and conflict indicators
};

inline GroundedRun ground(const SymbolicSystem& sys,
                          const std::map<std::string, uint32_t>& secret_env) {
  GroundedRun r;
  for (auto& [name, v] : secret_env) r.env[name] = Value::of_bv(v);
  for (int i = 1; i <= sys.n; ++i) {
    r.env["g_" + std::to_string(i)] = eval(sys.guard_rhs[static_cast<size_t>(i) - 1], r.env);
    r.env["a_" + std::to_string(i)] = eval(sys.addr_rhs[static_cast<size_t>(i) - 1], r.env);
  }
  for (const auto& p : sys.universe.preds) r.env[p.key.name()] = eval(p.rhs, r.env);
  // conflict indicators and misses must be bound in index order
  size_t eta_pos = 0;
  for (int i = 1; i <= sys.n; ++i) {
    while (eta_pos < sys.etas.size() && sys.etas[eta_pos].i == i) {
      const auto& ev = sys.etas[eta_pos];
      r.env[ev.var->name] = Value::of_int(eval(ev.cond, r.env).b ? 1 : 0);
      ++eta_pos;
    }
    bool miss = eval(sys.gamma_of(i), r.env).b;
    r.env["m_" + std::to_string(i)] = Value::of_int(miss ? 1 : 0);
    r.guards.push_back(eval(sys.guard_var(i), r.env).b);
    r.misses.push_back(miss);
  }
  return r;
}

}  // namespace cachet
