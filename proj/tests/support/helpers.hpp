#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "cachet/parse.hpp"
#include "cachet/solver.hpp"
#include "cachet/trace.hpp"
#include "test_config.hpp"

namespace testutil {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string sample_path(const std::string& name) {
  return std::string(CACHET_SAMPLES_DIR) + "/" + name;
}

inline cachet::Program load_sample(const std::string& name) {
  return cachet::parse_program(read_file(sample_path(name)));
}

inline std::vector<std::string> solver_command() {
  if (const char* env = std::getenv("CACHET_SOLVER")) {
    auto argv = cachet::split_command(env);
    if (!argv.empty()) return argv;
  }
  return cachet::split_command(CACHET_TEST_SOLVER_CMD);
}

inline cachet::Solver make_solver(int timeout_ms = 60'000) {
  cachet::SolverConfig cfg;
  cfg.argv = solver_command();
  cfg.timeout_ms = timeout_ms;
  return cachet::Solver(std::move(cfg));
}

}  // namespace testutil
