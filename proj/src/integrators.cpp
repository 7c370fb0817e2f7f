#include "lgv/integrators.hpp"

namespace lgv {

std::string to_string(Solver s) { return s == Solver::Euler ? "euler" : "rk4"; }

Solver solver_from_string(const std::string& name) {
  if (name == "euler") return Solver::Euler;
  if (name == "rk4") return Solver::Rk4;
  throw ConfigError("unknown solver '" + name + "' (expected euler or rk4)");
}

StepCounters& step_counters() {
  static StepCounters counters;
  return counters;
}

}  // namespace lgv
