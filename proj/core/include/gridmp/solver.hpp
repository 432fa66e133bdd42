#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gridmp/devices.hpp"
#include "gridmp/network.hpp"
#include "gridmp/tensor.hpp"

namespace gridmp {

struct SolverConfig {
  double tol = 1e-3;      // epsilon in the RMS stopping rule
  int max_iter = 1000;
  int min_iter = 0;       // keep iterating at least this long
  double rho_p = 1.0;
  double rho_theta = 1.0;
  double alpha = 1.0;     // over-relaxation, [1, 2)
  bool adaptive = true;   // residual-balancing penalty updates
  double adapt_mu = 2.0;
  double adapt_gamma = 1.1;
  int adapt_every = 10;
  int battery_inner_iters = 10;  // [1, 50]
  double omega = 1.0;            // inner-ADMM penalty
  bool inner_warm_start = true;
  int trace_every = 1;
  double divergence_rms = 1e9;
  void check() const;
};

/// Primal/dual residual L2 norms of one iteration, split by power and phase.
struct Residuals {
  double primal_p = 0.0;
  double primal_theta = 0.0;
  double dual_p = 0.0;
  double dual_theta = 0.0;

  double primal_norm() const {
    return std::sqrt(primal_p * primal_p + primal_theta * primal_theta);
  }
  double dual_norm() const {
    return std::sqrt(dual_p * dual_p + dual_theta * dual_theta);
  }
  double max_norm() const { return std::max(primal_norm(), dual_norm()); }
  bool finite() const {
    return std::isfinite(primal_p) && std::isfinite(primal_theta) &&
           std::isfinite(dual_p) && std::isfinite(dual_theta);
  }
};

struct TraceRow {
  int iter = 0;
  Residuals res;
  double rho_p = 0.0;
  double rho_theta = 0.0;
  double objective = 0.0;
};

enum class SolveStatus { converged, max_iter, diverged };
const char* to_string(SolveStatus status);

/// Iterate of the message-passing algorithm. The power dual u is
/// node-constant and stored at node level; the phase dual v has zero node
/// average and must stay at terminal level. z holds the power duplicate
/// variable (the projected p-residual at alpha = 1); xi, the phase
/// duplicate, is node-structured and stored at node level. z and xi double
/// as the previous projected iterates for the dual residuals.
struct SolverState {
  ScheduleTensor p, theta;  // K+1 slices on the contingency group only
  NodeTensor u;             // (K+1) x N x T
  ScheduleTensor v;         // K+1 slices on every group
  ScheduleTensor z;         // K+1 slices on every group
  NodeTensor xi;            // (K+1) x N x T
  double rho_p = 1.0;
  double rho_theta = 1.0;
  int iter = 0;
};

struct Solution {
  ScheduleTensor p, theta;
  NodeTensor prices;  // locational prices, -rho_p * u
  NodeTensor u;       // scaled duals kept for warm starts
  ScheduleTensor v;
  double objective = 0.0;
  bool objective_exact = true;  // false = some device cost fell back to the
                                // inner-iterate approximation
  SolveStatus status = SolveStatus::max_iter;
  int iterations = 0;
  Residuals final_residuals;
  double rho_p = 1.0;
  double rho_theta = 1.0;
  std::vector<TraceRow> trace;
  std::string message;
};

/// Per-iteration values needed to traverse an iteration in reverse:
/// the prox targets per group plus the penalty/relaxation constants.
/// Everything else is recomputed from them.
struct IterationRecord {
  std::vector<GroupTensor> target_p;      // per group, group k_eff slices
  std::vector<GroupTensor> target_theta;
  double rho_p = 1.0;
  double rho_theta = 1.0;
  double alpha = 1.0;
  double rescale_u = 1.0;  // dual rescaling applied after this iteration
  double rescale_v = 1.0;
};

/// Zero state, or a copy of `warm` (shapes checked). The duplicate
/// variables are re-derived as z = resid(p), xi = avg(theta); a warm
/// state keeps the warm solution's penalties.
SolverState init_state(const Network& net, const ContingencySpec& spec,
                       const Solution* warm = nullptr);

/// Rescales the stored duals to new penalty values (the underlying
/// multipliers rho*u, rho*v stay fixed) and records the penalties.
void align_penalties(SolverState& st, double rho_p, double rho_theta);

/// One outer iteration: prox updates (contingency group at base penalties,
/// shared groups at (K+1)-scaled penalties and contingency-averaged
/// targets), over-relaxed duplicate updates, scaled price updates, and the
/// residual norms of the new iterate.
Residuals iterate(SolverState& state, const Network& net,
                  const ContingencySpec& spec,
                  const std::vector<std::vector<GroupParams>>& slice_params,
                  const SolverConfig& config, ProxEngines& engines,
                  IterationRecord* record = nullptr);

/// Stopping rule: max(|r_primal|, |r_dual|) <= tol * sqrt(2 J T (K+1)).
bool check_convergence(const Residuals& res, const Network& net, double tol);

/// Residual-balancing penalty update; returns the (u, v) rescale factors
/// (rho_old / rho_new) that were applied.
std::pair<double, double> adapt_penalties(SolverState& state, const Residuals& res,
                                          const SolverConfig& config,
                                          ProxEngines& engines);

Solution solve(const Network& net, const ContingencySpec& spec,
               const SolverConfig& config, const Solution* warm = nullptr);

/// Objective of the current iterate for trace reporting: analytic device
/// costs evaluated directly, iterative kinds priced from their inner state.
double approx_objective(const Network& net,
                        const std::vector<std::vector<GroupParams>>& slice_params,
                        const ScheduleTensor& p, const ProxEngines& engines);

}  // namespace gridmp
