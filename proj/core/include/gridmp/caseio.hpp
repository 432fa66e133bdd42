#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gridmp/network.hpp"
#include "gridmp/solver.hpp"

namespace gridmp {

/// A network plus its contingency description, as stored in a case file.
struct Case {
  std::string name;
  Network net;
  ContingencySpec spec;
};

/// JSON case files. Parsing validates the resulting network and throws
/// std::runtime_error with the validation report on failure; serialization
/// round-trips losslessly (doubles are emitted shortest-round-trip).
Case case_from_json(const std::string& text);
std::string case_to_json(const Case& c);
Case load_case(const std::filesystem::path& path);
void save_case(const Case& c, const std::filesystem::path& path);

/// JSON solution files: schedules, prices, duals (for warm starts),
/// objective, status, iterations, final residuals.
std::string solution_to_json(const Case& c, const Solution& sol);
Solution solution_from_json(const Case& c, const std::string& text);
void save_solution(const Case& c, const Solution& sol,
                   const std::filesystem::path& path);
Solution load_solution(const Case& c, const std::filesystem::path& path);

/// Convergence-history CSV with the exact header
/// iter,r_primal_p,r_primal_theta,r_dual_p,r_dual_theta,rho_p,rho_theta,objective
std::string trace_to_csv(const std::vector<TraceRow>& trace);
void save_trace(const std::vector<TraceRow>& trace,
                const std::filesystem::path& path);

}  // namespace gridmp
