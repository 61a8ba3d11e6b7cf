#pragma once

// Patch representation shared by the oracle (application side) and the
// synthesizer. A monitor is a self-contained condition over the secret
// inputs: a list of named definitions evaluated in order, then a boolean
// body. Monitors are decided by concrete evaluation, never by solving.

#include <fstream>
#include <map>

#include "cachet/cache.hpp"
#include "cachet/formula.hpp"
#include "cachet/ir.hpp"
#include "cachet/sexpr.hpp"

namespace cachet {

struct PatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MonitorDef {
  std::string name;
  Sort sort = Sort::Bool;
  Formula rhs;
};

struct Monitor {
  std::vector<MonitorDef> defs;  // evaluated in order; may reference earlier defs
  Formula body;                  // boolean over secrets and defs

  bool eval_on(const std::map<std::string, uint32_t>& secret_env) const {
    Env env;
    for (auto& [name, v] : secret_env) env[name] = Value::of_bv(v);
    for (auto& d : defs) env[d.name] = eval(d.rhs, env);
    return eval(body, env).b;
  }
};

struct Patch {
  AttackModel model = AttackModel::Time;
  Monitor monitor;
  uint64_t miss_delta = 0;               // Time
  std::vector<RuntimeAction> actions;    // Trace
  Observation observation;               // pre-patch class observation (bookkeeping)
};

struct PatchFile {
  AttackModel model = AttackModel::Time;
  std::vector<Patch> patches;  // canonical merge order: reference class first
};

// ---------------------------------------------------------------------------
// Structured text serialization

inline void write_patch_file(std::ostream& os, const PatchFile& pf) {
  os << "model: " << attack_model_name(pf.model) << "\n";
  os << "patches: " << pf.patches.size() << "\n";
  for (size_t k = 0; k < pf.patches.size(); ++k) {
    const Patch& p = pf.patches[k];
    os << "patch " << k << ":\n";
    os << "  observation: " << p.observation.key() << "\n";
    if (pf.model == AttackModel::Time) {
      os << "  delta: " << p.miss_delta << "\n";
    } else {
      os << "  actions: " << p.actions.size() << "\n";
      for (auto& a : p.actions) {
        os << "  action " << a.at << ' ';
        switch (a.kind) {
          case RuntimeAction::Kind::InjectMiss:
            os << "miss";
            break;
          case RuntimeAction::Kind::InjectHit:
            os << "hit";
            break;
          case RuntimeAction::Kind::Invalidate:
            os << "invalidate";
            if (a.block) os << ' ' << *a.block;
            break;
        }
        os << "\n";
      }
    }
    os << "  defs: " << p.monitor.defs.size() << "\n";
    for (auto& d : p.monitor.defs)
      os << "  def " << d.name << ' ' << sort_name(d.sort) << ' ' << to_smt(d.rhs) << "\n";
    os << "  monitor: " << to_smt(p.monitor.body) << "\n";
  }
}

inline std::string patch_file_text(const PatchFile& pf) {
  std::ostringstream os;
  write_patch_file(os, pf);
  return os.str();
}

inline PatchFile parse_patch_file(const std::string& text,
                                  const std::vector<SecretDecl>& secrets) {
  PatchFile pf;
  std::istringstream is(text);
  std::string line;
  Patch* cur = nullptr;
  std::unordered_map<std::string, Sort> scope;
  std::unordered_map<std::string, Sort> base_scope;
  for (auto& s : secrets) base_scope[s.name] = Sort::Bv;

  auto sort_of = [](const std::string& s) {
    if (s == "Bool") return Sort::Bool;
    if (s == "Int") return Sort::Int;
    return Sort::Bv;
  };

  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "model:") {
      ls >> word;
      pf.model = word == "trace" ? AttackModel::Trace : AttackModel::Time;
    } else if (word == "patches:") {
      continue;
    } else if (word == "patch") {
      pf.patches.emplace_back();
      cur = &pf.patches.back();
      cur->model = pf.model;
      scope = base_scope;
    } else if (!cur) {
      throw PatchError("patch file: content before first patch");
    } else if (word == "observation:") {
      std::string key;
      ls >> key;
      cur->observation.kind = pf.model;
      if (key.size() >= 1 && key[0] == 'm') {
        cur->observation.miss_count = std::stoull(key.substr(1));
      } else if (key.size() >= 1 && key[0] == 't') {
        for (size_t k = 1; k < key.size(); ++k)
          cur->observation.bits.push_back(key[k] == '1');
      }
    } else if (word == "delta:") {
      ls >> cur->miss_delta;
    } else if (word == "actions:") {
      continue;
    } else if (word == "action") {
      uint32_t at;
      std::string kind;
      ls >> at >> kind;
      if (kind == "miss")
        cur->actions.push_back(RuntimeAction::inject_miss(at));
      else if (kind == "hit")
        cur->actions.push_back(RuntimeAction::inject_hit(at));
      else if (kind == "invalidate") {
        uint64_t block;
        if (ls >> block)
          cur->actions.push_back(RuntimeAction::invalidate(at, block));
        else
          cur->actions.push_back(RuntimeAction::invalidate(at));
      } else {
        throw PatchError("patch file: unknown action kind '" + kind + "'");
      }
    } else if (word == "defs:") {
      continue;
    } else if (word == "def") {
      std::string name, sort_tok;
      ls >> name >> sort_tok;
      Sort sort = sort_of(sort_tok);
      std::string rest;
      std::getline(ls, rest);
      if (sort_tok == "(_") {
        // "(_ BitVec 32)" spans two tokens; recover the remainder
        sort = Sort::Bv;
        auto close = rest.find(')');
        rest = close == std::string::npos ? rest : rest.substr(close + 1);
      }
      auto exprs = parse_sexprs(rest);
      if (exprs.size() != 1) throw PatchError("patch file: bad def for '" + name + "'");
      MonitorDef d{name, sort, parse_formula(exprs[0], scope)};
      cur->monitor.defs.push_back(d);
      scope[name] = sort;
    } else if (word == "monitor:") {
      std::string rest;
      std::getline(ls, rest);
      auto exprs = parse_sexprs(rest);
      if (exprs.size() != 1) throw PatchError("patch file: bad monitor body");
      cur->monitor.body = parse_formula(exprs[0], scope);
    } else {
      throw PatchError("patch file: unexpected line '" + line + "'");
    }
  }
  for (auto& p : pf.patches)
    if (!p.monitor.body) throw PatchError("patch file: patch without monitor");
  return pf;
}

inline PatchFile load_patch_file(const std::string& path,
                                 const std::vector<SecretDecl>& secrets) {
  std::ifstream in(path);
  if (!in) throw PatchError("cannot open patch file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_patch_file(buf.str(), secrets);
}

}  // namespace cachet
