// Command-line front end: solve cases, run the reference QP, compute
// parameter sensitivities, and generate synthetic cases.
//
// Exit codes: 0 success/converged, 1 usage or input error, 2 iteration
// limit reached, 3 divergence, 4 infeasible (oracle).

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridmp/casegen.hpp"
#include "gridmp/caseio.hpp"
#include "gridmp/oracle.hpp"
#include "gridmp/sensitivity.hpp"
#include "gridmp/solver.hpp"

namespace {

using gridmp::Case;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitMaxIter = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitInfeasible = 4;

struct SolveArgs {
  std::string case_path;
  double tol = 1e-3;
  int max_iter = 1000;
  int min_iter = 0;
  double rho_p = 1.0;
  double rho_theta = 1.0;
  double alpha = 1.0;
  int adapt_every = 10;
  bool no_adapt = false;
  int inner_iters = 10;
  std::string warm_path;
  std::string trace_path;
  std::string out_path;
  int trace_every = 1;
  std::uint64_t seed = 0;  // reserved; the solver itself is deterministic
};

int run_solve(const SolveArgs& a) {
  const Case c = gridmp::load_case(a.case_path);
  gridmp::SolverConfig cfg;
  cfg.tol = a.tol;
  cfg.max_iter = a.max_iter;
  cfg.min_iter = a.min_iter;
  cfg.rho_p = a.rho_p;
  cfg.rho_theta = a.rho_theta;
  cfg.alpha = a.alpha;
  cfg.adaptive = !a.no_adapt;
  cfg.adapt_every = a.adapt_every;
  cfg.battery_inner_iters = a.inner_iters;
  cfg.trace_every = a.trace_every;

  std::optional<gridmp::Solution> warm;
  if (!a.warm_path.empty()) {
    warm = gridmp::load_solution(c, a.warm_path);
  }
  const gridmp::Solution sol =
      gridmp::solve(c.net, c.spec, cfg, warm ? &*warm : nullptr);

  std::fprintf(stderr, "%s after %d iterations, objective %.6g\n",
               gridmp::to_string(sol.status), sol.iterations, sol.objective);
  if (!a.out_path.empty()) gridmp::save_solution(c, sol, a.out_path);
  if (!a.trace_path.empty()) gridmp::save_trace(sol.trace, a.trace_path);

  switch (sol.status) {
    case gridmp::SolveStatus::converged: return kExitOk;
    case gridmp::SolveStatus::max_iter: return kExitMaxIter;
    case gridmp::SolveStatus::diverged: return kExitDiverged;
  }
  return kExitError;
}

int run_oracle(const std::string& case_path, const std::string& out_path,
               double tol) {
  const Case c = gridmp::load_case(case_path);
  const gridmp::MonolithicQp mqp = gridmp::assemble(c.net, c.spec);
  const gridmp::OracleSolution sol = gridmp::solve_exact(mqp, c.net, tol);

  ordered_json j;
  j["version"] = 1;
  j["case"] = c.name;
  j["status"] = sol.status == gridmp::QpStatus::optimal     ? "optimal"
                : sol.status == gridmp::QpStatus::infeasible ? "infeasible"
                                                             : "max_iter";
  j["objective"] = sol.objective;
  j["iterations"] = sol.iterations;
  j["kkt_residual"] = sol.kkt_residual;
  if (sol.status == gridmp::QpStatus::infeasible) {
    j["infeasibility"] = sol.infeasibility;
  }
  // Schedules and prices in the same layout as solve output.
  gridmp::Solution as_solution;
  as_solution.p = sol.p;
  as_solution.theta = sol.theta;
  as_solution.prices = sol.prices;
  as_solution.u = gridmp::NodeTensor(c.net.num_slices(), c.net.num_nodes,
                                     c.net.horizon);
  as_solution.v = gridmp::make_schedule(c.net, true);
  as_solution.objective = sol.objective;
  as_solution.status = gridmp::SolveStatus::converged;
  const ordered_json sol_json = ordered_json::parse(
      gridmp::solution_to_json(c, as_solution));
  j["schedules"] = sol_json.at("schedules");
  j["prices"] = sol_json.at("prices");

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << j.dump(2) << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  std::fprintf(stderr, "oracle: %s, objective %.6g, kkt residual %.2e\n",
               j["status"].get<std::string>().c_str(), sol.objective,
               sol.kkt_residual);
  if (sol.status == gridmp::QpStatus::infeasible) return kExitInfeasible;
  if (sol.status == gridmp::QpStatus::max_iter) return kExitMaxIter;
  return kExitOk;
}

struct GradArgs {
  std::string case_path;
  std::string selector = "generator.p_max";
  int iters = 1000;
  bool fd = false;
  double h = 1e-4;
  std::string out_path;
  double rho_p = 1.0;
  double rho_theta = 1.0;
  bool no_adapt = false;
};

int run_grad(const GradArgs& a) {
  const Case c = gridmp::load_case(a.case_path);
  const auto sel = gridmp::ParameterSelector::parse(a.selector);
  gridmp::SolverConfig cfg;
  cfg.rho_p = a.rho_p;
  cfg.rho_theta = a.rho_theta;
  cfg.adaptive = !a.no_adapt;
  cfg.max_iter = a.iters;

  std::vector<double> g;
  if (a.fd) {
    g = gridmp::grad_fd(c.net, c.spec, cfg, a.iters, sel, a.h);
  } else {
    try {
      const gridmp::Tape tape =
          gridmp::solve_with_tape(c.net, c.spec, cfg, a.iters);
      g = gridmp::grad(tape, c.net, c.spec, sel);
    } catch (const std::invalid_argument& e) {
      std::fprintf(stderr, "%s\n", e.what());
      std::fprintf(stderr, "hint: rerun with --fd for finite differences\n");
      return kExitError;
    }
  }

  ordered_json j;
  j["version"] = 1;
  j["case"] = c.name;
  j["selector"] = sel.to_string();
  j["iters"] = a.iters;
  j["mode"] = a.fd ? "fd" : "unrolled";
  if (a.fd) j["h"] = a.h;
  j["labels"] = sel.labels(c.net);
  j["gradient"] = g;

  // Exact baseline from the reference QP where available: the negative of
  // the generator capacity duals.
  if (sel.kind == gridmp::DeviceKind::generator && sel.param == "p_max") {
    try {
      const auto mqp = gridmp::assemble(c.net, c.spec);
      const auto osol = gridmp::solve_exact(mqp, c.net, 1e-8);
      if (osol.status == gridmp::QpStatus::optimal) {
        std::vector<double> baseline;
        for (size_t gi = 0; gi < c.net.groups.size(); ++gi) {
          if (c.net.groups[gi].kind != gridmp::DeviceKind::generator) continue;
          const auto duals = gridmp::generator_capacity_duals(
              mqp, osol, c.net, static_cast<int>(gi));
          const auto& grp = c.net.groups[gi];
          const int T = c.net.horizon;
          const int keff = mqp.k_eff[gi];
          for (int d = 0; d < grp.count; ++d) {
            for (int t = 0; t < T; ++t) {
              double sum = 0.0;
              for (int k = 0; k < keff; ++k) {
                sum += duals[(static_cast<size_t>(k) * grp.count + d) * T + t];
              }
              baseline.push_back(-sum);
            }
          }
        }
        j["oracle_neg_dual"] = baseline;
        j["oracle_objective"] = osol.objective;
      }
    } catch (const std::exception& e) {
      std::fprintf(stderr, "oracle baseline skipped: %s\n", e.what());
    }
  }

  if (!a.out_path.empty()) {
    std::ofstream out(a.out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + a.out_path);
    out << j.dump(2) << "\n";
  } else {
    std::cout << j.dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-period contingency-constrained DC OPF via proximal "
               "message passing"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve_cmd = app.add_subcommand("solve", "Solve a case file");
  solve_cmd->add_option("case", sa.case_path, "Case JSON file")->required();
  solve_cmd->add_option("--tol", sa.tol, "Stopping tolerance (RMS)");
  solve_cmd->add_option("--max-iter", sa.max_iter, "Iteration cap");
  solve_cmd->add_option("--min-iter", sa.min_iter, "Iteration floor");
  solve_cmd->add_option("--rho-p", sa.rho_p, "Initial power penalty");
  solve_cmd->add_option("--rho-theta", sa.rho_theta, "Initial phase penalty");
  solve_cmd->add_option("--alpha", sa.alpha, "Over-relaxation in [1, 2)");
  solve_cmd->add_option("--adapt-every", sa.adapt_every,
                        "Penalty adaptation interval");
  solve_cmd->add_flag("--no-adapt", sa.no_adapt, "Disable penalty adaptation");
  solve_cmd->add_option("--inner-iters", sa.inner_iters,
                        "Inner iterations for battery/QP prox (1..50)");
  solve_cmd->add_option("--warm", sa.warm_path, "Warm-start solution JSON");
  solve_cmd->add_option("--trace", sa.trace_path, "Write residual trace CSV");
  solve_cmd->add_option("--trace-every", sa.trace_every, "Trace stride");
  solve_cmd->add_option("--out", sa.out_path, "Write solution JSON");
  solve_cmd->add_option("--seed", sa.seed, "Reserved (solve is deterministic)");

  std::string oracle_case, oracle_out;
  double oracle_tol = 1e-8;
  auto* oracle_cmd =
      app.add_subcommand("oracle", "Solve a case with the reference QP");
  oracle_cmd->add_option("case", oracle_case, "Case JSON file")->required();
  oracle_cmd->add_option("--out", oracle_out, "Write solution JSON");
  oracle_cmd->add_option("--tol", oracle_tol, "KKT tolerance");

  GradArgs ga;
  auto* grad_cmd = app.add_subcommand(
      "grad", "Cost gradient with respect to device parameters");
  grad_cmd->set_help_flag("--help", "Print help");  // frees -h for the FD step
  grad_cmd->add_option("case", ga.case_path, "Case JSON file")->required();
  grad_cmd->add_option("--wrt", ga.selector, "Selector, e.g. generator.p_max");
  grad_cmd->add_option("--iters", ga.iters, "Fixed iteration count");
  grad_cmd->add_flag("--fd", ga.fd, "Finite differences instead of unrolling");
  grad_cmd->add_option("--h", ga.h, "Finite-difference step");
  grad_cmd->add_option("--rho-p", ga.rho_p, "Initial power penalty");
  grad_cmd->add_option("--rho-theta", ga.rho_theta, "Initial phase penalty");
  grad_cmd->add_flag("--no-adapt", ga.no_adapt, "Disable penalty adaptation");
  grad_cmd->add_option("--out", ga.out_path, "Write gradient JSON");

  gridmp::CaseGenOptions go;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-case", "Generate a synthetic case");
  gen_cmd->add_option("--nodes", go.nodes, "Node count")->required();
  gen_cmd->add_option("--horizon", go.horizon, "Time periods");
  gen_cmd->add_option("--contingencies", go.contingencies, "n-1 line outages");
  gen_cmd->add_option("--load-scale", go.load_scale, "Load scale (<= 0.7 "
                      "dispatches without curtailment)");
  gen_cmd->add_option("--seed", go.seed, "Generator seed");
  gen_cmd->add_option("--out", gen_out, "Write case JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) return run_solve(sa);
    if (oracle_cmd->parsed()) return run_oracle(oracle_case, oracle_out, oracle_tol);
    if (grad_cmd->parsed()) return run_grad(ga);
    if (gen_cmd->parsed()) {
      const Case c = gridmp::generate_case(go);
      gridmp::save_case(c, gen_out);
      std::fprintf(stderr, "wrote %s (%d nodes, %d devices, T=%d, K=%d)\n",
                   gen_out.c_str(), c.net.num_nodes, c.net.num_devices(),
                   c.net.horizon, c.net.contingency_count);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
