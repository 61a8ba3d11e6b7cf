#pragma once

// SMT backend behind a subprocess speaking SMT-LIB 2 on stdin/stdout
// (`z3 -in`, cvc5, or the bundled wasm shim). One process is kept alive and
// reset between queries; every query re-asserts its whole script, so no
// solver state leaks across queries. A query that exceeds its deadline gets
// the process killed and reports Unknown.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cachet/formula.hpp"
#include "cachet/sexpr.hpp"

namespace cachet {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_command(const std::string& cmd) {
  std::vector<std::string> out;
  std::istringstream is(cmd);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::optional<std::string> find_in_path(const std::string& name) {
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::istringstream is(path);
  std::string dir;
  while (std::getline(is, dir, ':')) {
    if (dir.empty()) continue;
    std::filesystem::path p = std::filesystem::path(dir) / name;
    std::error_code ec;
    if (std::filesystem::exists(p, ec) && ::access(p.c_str(), X_OK) == 0) return p.string();
  }
  return std::nullopt;
}

// Default backend resolution: CACHET_SOLVER env, then z3 on PATH, then the
// z3 shim next to the running executable (build layout).
inline std::vector<std::string> default_solver_command(
    const std::string& exe_dir = {}) {
  if (const char* env = std::getenv("CACHET_SOLVER")) {
    auto argv = split_command(env);
    if (!argv.empty()) return argv;
  }
  if (auto z3 = find_in_path("z3")) return {*z3, "-in"};
  if (!exe_dir.empty()) {
    for (const char* rel : {"z3shim/z3shim.js", "../z3shim/z3shim.js"}) {
      std::filesystem::path p = std::filesystem::path(exe_dir) / rel;
      std::error_code ec;
      if (std::filesystem::exists(p, ec)) {
        if (auto node = find_in_path("node")) return {*node, p.string()};
      }
    }
  }
  throw SolverError(
      "no SMT solver found: set CACHET_SOLVER (e.g. \"z3 -in\" or "
      "\"node .../z3shim.js\")");
}

namespace detail {

class SubprocessPipe {
 public:
  SubprocessPipe() = default;
  SubprocessPipe(const SubprocessPipe&) = delete;
  SubprocessPipe& operator=(const SubprocessPipe&) = delete;

  ~SubprocessPipe() { terminate(); }

  void spawn(const std::vector<std::string>& argv) {
    terminate();
    if (argv.empty()) throw SolverError("empty solver command");
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw SolverError("pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw SolverError("fork() failed");
    if (pid_ == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      std::vector<char*> cargv;
      for (auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      execvp(cargv[0], cargv.data());
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    stdin_fd_ = in_pipe[1];
    stdout_fd_ = out_pipe[0];
    buffer_.clear();
  }

  bool running() const { return pid_ > 0; }

  void terminate() {
    if (pid_ > 0) {
      close(stdin_fd_);
      close(stdout_fd_);
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }

  bool write_all(const std::string& data) {
    size_t off = 0;
    while (off < data.size()) {
      ssize_t w = ::write(stdin_fd_, data.data() + off, data.size() - off);
      if (w <= 0) return false;
      off += static_cast<size_t>(w);
    }
    return true;
  }

  // Reads until a line equal to `marker` appears; returns text before it.
  std::optional<std::string> read_until(const std::string& marker,
                                        std::chrono::steady_clock::time_point deadline) {
    std::string needle = marker + "\n";
    for (;;) {
      size_t pos = buffer_.find(needle);
      while (pos != std::string::npos && pos != 0 && buffer_[pos - 1] != '\n')
        pos = buffer_.find(needle, pos + 1);
      if (pos != std::string::npos) {
        std::string out = buffer_.substr(0, pos);
        buffer_.erase(0, pos + needle.size());
        return out;
      }
      auto now = std::chrono::steady_clock::now();
      if (now >= deadline) return std::nullopt;
      int ms = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
      struct pollfd pfd {
        stdout_fd_, POLLIN, 0
      };
      int rc = poll(&pfd, 1, std::max(1, ms));
      if (rc <= 0) {
        if (rc == 0) return std::nullopt;  // timed out
        return std::nullopt;
      }
      char chunk[4096];
      ssize_t r = ::read(stdout_fd_, chunk, sizeof chunk);
      if (r <= 0) return std::nullopt;  // backend exited
      buffer_.append(chunk, static_cast<size_t>(r));
    }
  }

 private:
  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
};

inline Value parse_model_value(const SExpr& e) {
  if (e.is_atom) {
    const std::string& a = e.atom;
    if (a == "true") return Value::of_bool(true);
    if (a == "false") return Value::of_bool(false);
    if (a.rfind("#x", 0) == 0)
      return Value::of_bv(static_cast<uint32_t>(std::stoull(a.substr(2), nullptr, 16)));
    if (a.rfind("#b", 0) == 0)
      return Value::of_bv(static_cast<uint32_t>(std::stoull(a.substr(2), nullptr, 2)));
    return Value::of_int(std::stoll(a));
  }
  if (e.size() == 2 && e[0].is_atom && e[0].atom == "-")
    return Value::of_int(-std::stoll(e[1].atom));
  if (e.size() == 3 && e[0].is_atom && e[0].atom == "_" && e[1].atom.rfind("bv", 0) == 0)
    return Value::of_bv(static_cast<uint32_t>(std::stoull(e[1].atom.substr(2))));
  throw SolverError("cannot parse model value");
}

}  // namespace detail

struct NamedAssertion {
  std::string label;
  Formula formula;
};

struct SolveResult {
  enum class Status { Sat, Unsat, Unknown } status = Status::Unknown;
  std::unordered_map<std::string, Value> model;  // Sat
  std::vector<std::string> core;                 // Unsat: labels
  std::string reason;                            // Unknown

  bool sat() const { return status == Status::Sat; }
  bool unsat() const { return status == Status::Unsat; }
  bool unknown() const { return status == Status::Unknown; }
};

struct SolverConfig {
  std::vector<std::string> argv;
  int timeout_ms = 60'000;
  std::string log_dir;  // empty: no logging
};

class Solver {
 public:
  explicit Solver(SolverConfig cfg) : cfg_(std::move(cfg)) {}

  const SolverConfig& config() const { return cfg_; }
  int queries_issued() const { return query_index_; }

  SolveResult check(const std::vector<Formula>& asserts,
                    const std::vector<NamedAssertion>& named = {},
                    const std::vector<std::string>& get_values = {}) {
    std::string script = build_script(asserts, named);
    ++query_index_;
    if (!cfg_.log_dir.empty()) log_script(script, get_values);

    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
    SolveResult res;
    if (!ensure_process()) {
      res.reason = "failed to start solver backend";
      return res;
    }
    if (!proc_.write_all(script) || !proc_.write_all("(check-sat)\n(echo \"" + marker() + "\")\n")) {
      proc_.terminate();
      res.reason = "solver backend closed the pipe";
      return res;
    }
    auto status_text = proc_.read_until(marker(), deadline);
    if (!status_text) {
      proc_.terminate();
      res.reason = "solver timed out or exited";
      return res;
    }
    std::string status = last_token(*status_text);
    if (status == "sat") {
      res.status = SolveResult::Status::Sat;
      if (!get_values.empty() && !read_values(get_values, deadline, res)) {
        proc_.terminate();
        res.status = SolveResult::Status::Unknown;
        res.reason = "failed to read model values";
      }
      return res;
    }
    if (status == "unsat") {
      res.status = SolveResult::Status::Unsat;
      if (!named.empty() && !read_core(deadline, res)) {
        proc_.terminate();
        res.status = SolveResult::Status::Unknown;
        res.reason = "failed to read unsat core";
      }
      return res;
    }
    res.reason = "solver returned: " + status;
    return res;
  }

 private:
  std::string marker() const { return "=q" + std::to_string(query_index_) + "-done="; }

  static std::string last_token(const std::string& text) {
    std::istringstream is(text);
    std::string tok, last;
    while (is >> tok)
      if (tok == "sat" || tok == "unsat" || tok == "unknown") last = tok;
    return last.empty() ? text : last;
  }

  bool ensure_process() {
    if (proc_.running()) return true;
    try {
      proc_.spawn(cfg_.argv);
    } catch (const SolverError&) {
      return false;
    }
    return true;
  }

  std::string build_script(const std::vector<Formula>& asserts,
                           const std::vector<NamedAssertion>& named) {
    std::set<std::pair<std::string, Sort>> vars;
    for (auto& f : asserts) collect_vars(f, vars);
    for (auto& na : named) collect_vars(na.formula, vars);
    std::ostringstream os;
    os << "(reset)\n";
    os << "(set-option :produce-models true)\n";
    os << "(set-option :produce-unsat-cores true)\n";
    for (auto& [name, sort] : vars)
      os << "(declare-const " << name << ' ' << sort_name(sort) << ")\n";
    for (auto& f : asserts) {
      os << "(assert ";
      emit_smt(os, f);
      os << ")\n";
    }
    for (auto& na : named) {
      os << "(assert (! ";
      emit_smt(os, na.formula);
      os << " :named " << na.label << "))\n";
    }
    return os.str();
  }

  bool read_values(const std::vector<std::string>& names,
                   std::chrono::steady_clock::time_point deadline, SolveResult& res) {
    std::ostringstream os;
    os << "(get-value (";
    for (size_t k = 0; k < names.size(); ++k) os << (k ? " " : "") << names[k];
    os << "))\n(echo \"" << marker() << "\")\n";
    if (!proc_.write_all(os.str())) return false;
    auto text = proc_.read_until(marker(), deadline);
    if (!text) return false;
    std::vector<SExpr> top;
    try {
      top = parse_sexprs(*text);
    } catch (const SExprError&) {
      return false;
    }
    for (auto& se : top) {
      if (se.is_atom) continue;
      for (auto& pair : se.items) {
        if (pair.is_atom || pair.size() != 2 || !pair[0].is_atom) continue;
        try {
          res.model[pair[0].atom] = detail::parse_model_value(pair[1]);
        } catch (...) {
          return false;
        }
      }
    }
    return !res.model.empty() || names.empty();
  }

  bool read_core(std::chrono::steady_clock::time_point deadline, SolveResult& res) {
    if (!proc_.write_all("(get-unsat-core)\n(echo \"" + marker() + "\")\n")) return false;
    auto text = proc_.read_until(marker(), deadline);
    if (!text) return false;
    std::vector<SExpr> top;
    try {
      top = parse_sexprs(*text);
    } catch (const SExprError&) {
      return false;
    }
    for (auto& se : top) {
      if (se.is_atom) continue;
      for (auto& item : se.items)
        if (item.is_atom) res.core.push_back(item.atom);
    }
    return true;
  }

  void log_script(const std::string& script, const std::vector<std::string>& get_values) {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.log_dir, ec);
    char name[32];
    std::snprintf(name, sizeof name, "q%05d.smt2", query_index_);
    std::ofstream out(std::filesystem::path(cfg_.log_dir) / name);
    out << script << "(check-sat)\n";
    if (!get_values.empty()) {
      out << "; (get-value (...)) issued on sat\n";
    }
  }

  SolverConfig cfg_;
  detail::SubprocessPipe proc_;
  int query_index_ = 0;
};

// Convenience entry point matching the spec surface: satisfiability of a
// formula plus labeled assumptions.
inline SolveResult check_sat(Solver& solver, const Formula& f,
                             const std::vector<NamedAssertion>& assumptions = {},
                             const std::vector<std::string>& get_values = {}) {
  return solver.check({f}, assumptions, get_values);
}

}  // namespace cachet
