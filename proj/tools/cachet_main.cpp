// Command-line front end: verify | patch | quantify | simulate.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cachet/metrics.hpp"
#include "cachet/parse.hpp"
#include "cachet/patch.hpp"
#include "cachet/verifier.hpp"

namespace fs = std::filesystem;
using namespace cachet;

namespace {

struct CommonOpts {
  std::string program_path;
  std::string cache_path;
  std::string model = "time";
  std::string solver_cmd;
  std::string out_dir;
  int timeout_secs = 60;
  size_t unroll_limit = 4096;
  bool timings = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string exe_dir(const char* argv0) {
  std::error_code ec;
  auto p = fs::canonical("/proc/self/exe", ec);
  if (!ec) return p.parent_path().string();
  return fs::path(argv0).parent_path().string();
}

struct LoadedRun {
  Program program;
  UnrolledTrace trace;
  CacheConfig cfg;
  AttackModel model = AttackModel::Time;
};

LoadedRun load_run(const CommonOpts& opts) {
  LoadedRun r;
  r.program = parse_program(read_file(opts.program_path));
  r.trace = unroll(r.program, opts.unroll_limit);
  r.cfg = parse_cache_config(read_file(opts.cache_path));
  if (opts.model == "time")
    r.model = AttackModel::Time;
  else if (opts.model == "trace")
    r.model = AttackModel::Trace;
  else
    throw std::runtime_error("model must be 'time' or 'trace'");
  return r;
}

Solver make_solver(const CommonOpts& opts, const char* argv0) {
  SolverConfig sc;
  sc.argv = opts.solver_cmd.empty() ? default_solver_command(exe_dir(argv0))
                                    : split_command(opts.solver_cmd);
  sc.timeout_ms = opts.timeout_secs * 1000;
  if (!opts.out_dir.empty()) sc.log_dir = (fs::path(opts.out_dir) / "smt").string();
  return Solver(std::move(sc));
}

void emit(const CommonOpts& opts, const std::string& filename, const std::string& text) {
  if (opts.out_dir.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(opts.out_dir);
  std::ofstream out(fs::path(opts.out_dir) / filename);
  out << text;
  std::cout << "wrote " << (fs::path(opts.out_dir) / filename).string() << "\n";
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_model = true) {
  cmd->add_option("--program", opts.program_path, "program source file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--cache", opts.cache_path, "cache config file")
      ->required()
      ->check(CLI::ExistingFile);
  if (with_model)
    cmd->add_option("--model", opts.model, "attack model: time|trace")->required();
  cmd->add_option("--solver", opts.solver_cmd, "SMT solver command (default: $CACHET_SOLVER)");
  cmd->add_option("--timeout", opts.timeout_secs, "per-query solver timeout in seconds");
  cmd->add_option("--out", opts.out_dir, "output directory (reports, solver logs)");
  cmd->add_option("--unroll-limit", opts.unroll_limit, "max unrolled accesses");
  cmd->add_flag("--timings", opts.timings, "include wall times in reports");
}

int cmd_verify(const CommonOpts& opts, const char* argv0) {
  LoadedRun run = load_run(opts);
  Solver solver = make_solver(opts, argv0);
  SymbolicSystem sys = execute_symbolic(run.trace, run.cfg);
  Verifier verifier(sys, solver, run.model);
  VerificationOutcome out = verifier.run_cegar();
  emit(opts, "verdict.txt", verdict_report(out, sys, run.model, opts.timings));
  switch (out.kind) {
    case VerificationOutcome::Kind::Verified:
      return 0;
    case VerificationOutcome::Kind::Violation:
      return 1;
    case VerificationOutcome::Kind::Inconclusive:
      return 2;
  }
  return 2;
}

int cmd_patch(const CommonOpts& opts, const char* argv0) {
  LoadedRun run = load_run(opts);
  Solver solver = make_solver(opts, argv0);
  SymbolicSystem sys = execute_symbolic(run.trace, run.cfg);
  PatchSynthesizer synth(sys, solver, run.model);
  MonitoringResult res = synth.run_monitoring();

  std::ostringstream report;
  report << verdict_report(res.cegar, sys, run.model, opts.timings);
  report << "classes_explored: " << res.entries.size() << "\n";
  for (auto& e : res.entries)
    report << "class " << e.obs.key() << ": members=" << e.members.size() << "\n";
  for (auto& w : res.warnings) report << "warning: " << w << "\n";

  SecretSpace space(run.trace.secrets);
  bool post_ok = true;
  if (res.cegar.violation() && space.enumerable()) {
    OracleReport before = oracle_classes(run.trace, run.cfg, run.model);
    OracleReport after = oracle_classes(run.trace, run.cfg, run.model, &res.patches.patches);
    Prior prior = Prior::uniform_over(space.size());
    report << "metrics_before:\n" << metrics_text(compute_metrics(before, prior));
    report << "metrics_after:\n" << metrics_text(compute_metrics(after, prior));
    post_ok = after.classes.size() == 1;
    if (!post_ok) report << "warning: post-patch oracle still has "
                         << after.classes.size() << " classes\n";
  }
  emit(opts, "patches.txt", patch_file_text(res.patches));
  emit(opts, "patch_report.txt", report.str());
  if (!res.complete || !post_ok) return 3;
  return 0;
}

int cmd_quantify(const CommonOpts& opts, const std::string& patches_path,
                 const std::string& prior_path) {
  LoadedRun run = load_run(opts);
  SecretSpace space(run.trace.secrets);
  space.require_enumerable();
  std::optional<PatchFile> patches;
  if (!patches_path.empty())
    patches = load_patch_file(patches_path, run.trace.secrets);
  OracleReport rep = oracle_classes(run.trace, run.cfg, run.model,
                                    patches ? &patches->patches : nullptr);
  Prior prior = prior_path.empty() ? Prior::uniform_over(space.size())
                                   : load_prior(prior_path, space.size());
  std::ostringstream os;
  os << report_text(rep);
  os << metrics_text(compute_metrics(rep, prior));
  emit(opts, "quantify.txt", os.str());
  return 0;
}

int cmd_simulate(const CommonOpts& opts, const std::vector<std::string>& secret_args) {
  LoadedRun run = load_run(opts);
  std::map<std::string, uint32_t> env;
  for (auto& kv : secret_args) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--secret expects name=value");
    env[kv.substr(0, eq)] = static_cast<uint32_t>(std::stoul(kv.substr(eq + 1), nullptr, 0));
  }
  for (auto& s : run.trace.secrets) {
    if (!env.count(s.name)) throw std::runtime_error("missing --secret " + s.name);
    if (env[s.name] >= (1u << s.width))
      throw std::runtime_error("secret '" + s.name + "' out of range for u" +
                               std::to_string(s.width));
  }

  ConcreteRun cr = run_trace(run.trace, env);
  Execution ex = execute(run.trace, run.cfg, env);
  std::ostringstream os;
  size_t pos = 0;
  for (size_t i = 0; i < run.trace.size(); ++i) {
    const AccessSite& site = run.trace.accesses[i];
    os << "access " << site.index << ": " << (site.is_store ? "store" : "load");
    if (!cr.executed[i]) {
      os << " skipped\n";
      continue;
    }
    BlockLoc loc = map_address(run.cfg, cr.addrs[i]);
    os << " addr=0x" << std::hex << cr.addrs[i] << std::dec << " block=" << loc.block
       << " set=" << loc.set << " tag=" << loc.tag
       << (ex.misses[pos] ? " miss" : " hit") << "\n";
    ++pos;
  }
  os << "observation_time: " << observe(AttackModel::Time, ex.misses).key() << "\n";
  os << "observation_trace: " << observe(AttackModel::Trace, ex.misses).key() << "\n";
  emit(opts, "simulate.txt", os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cache side-channel verifier and patch synthesizer"};
  app.require_subcommand(1);

  CommonOpts verify_opts, patch_opts, quant_opts, sim_opts;
  std::string patches_path, prior_path;
  std::vector<std::string> secret_args;

  CLI::App* verify = app.add_subcommand("verify", "prove or refute side-channel freedom");
  add_common(verify, verify_opts);
  CLI::App* patch = app.add_subcommand("patch", "explore classes and synthesize patches");
  add_common(patch, patch_opts);
  CLI::App* quantify = app.add_subcommand("quantify", "oracle classes and leakage metrics");
  add_common(quantify, quant_opts);
  quantify->add_option("--patches", patches_path, "patch file to apply")
      ->check(CLI::ExistingFile);
  quantify->add_option("--prior", prior_path, "prior weights file (packed order)")
      ->check(CLI::ExistingFile);
  CLI::App* simulate = app.add_subcommand("simulate", "dump one concrete execution");
  add_common(simulate, sim_opts, false);
  simulate->add_option("--secret", secret_args, "secret assignment name=value")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(verify_opts, argv[0]);
    if (patch->parsed()) return cmd_patch(patch_opts, argv[0]);
    if (quantify->parsed()) return cmd_quantify(quant_opts, patches_path, prior_path);
    if (simulate->parsed()) return cmd_simulate(sim_opts, secret_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
