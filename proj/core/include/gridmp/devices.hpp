#pragma once

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "gridmp/network.hpp"
#include "gridmp/qp_prox.hpp"
#include "gridmp/tensor.hpp"

namespace gridmp {

constexpr double kFeasTol = 1e-6;  // constraint slack treated as feasible

// --- Analytic proximal operators (single device, vectors of length T) ---
//
// prox_{g,rho_p,rho_theta}(x, y) = argmin g(p,th) + rho_p/2 |p-x|^2
//                                              + rho_theta/2 |th-y|^2.

/// Generator: p = clamp((rho*x - b) / (2a + rho), p_min, p_max); theta
/// passes through unchanged.
void prox_generator(double quad_cost, double linear_cost,
                    std::span<const double> p_min, std::span<const double> p_max,
                    std::span<const double> x, double rho,
                    std::span<double> p_out);

/// Fixed load: projection onto {p = p_load}.
void prox_fixed_load(std::span<const double> p_load, std::span<double> p_out);

/// AC line under the DC approximation. Writes all four output series.
/// An outaged line (capacity == 0 and susceptance == 0) forces zero flow
/// and passes phases through.
void prox_ac_line(double capacity, double susceptance,
                  std::span<const double> x1, std::span<const double> x2,
                  std::span<const double> y1, std::span<const double> y2,
                  double rho_p, double rho_theta,
                  std::span<double> p1, std::span<double> p2,
                  std::span<double> th1, std::span<double> th2);

/// DC line: p2 = clamp((x2 - x1)/2, -u, u), p1 = -p2, phases pass through.
void prox_dc_line(double capacity, std::span<const double> x1,
                  std::span<const double> x2, std::span<double> p1,
                  std::span<double> p2);

/// Battery prox via the inner-ADMM engine; theta passes through.
/// (Exposed mainly for tests; the solver goes through ProxEngines.)
void prox_battery(QpProxWorkspace& ws, std::span<const double> x, int iters,
                  std::span<double> p_out);

// --- Cost evaluation ---

/// Cost of every device of group `gi` under slice-k parameters, given that
/// group's schedules. Constraint violations beyond feas_tol make the device
/// cost +inf. Battery and generic-QP costs are evaluated exactly by an
/// inner dense QP solve with feas_tol slack on the schedule-coupling rows.
std::vector<double> group_cost(const Network& net, const ContingencySpec& spec,
                               int gi, int k, const GroupTensor& p,
                               const GroupTensor& theta,
                               double feas_tol = kFeasTol);

/// Problem objective on a device-feasible iterate: shared groups count once,
/// the contingency group's slices are averaged over K+1. Returns +inf when
/// any device is infeasible beyond feas_tol.
double total_cost(const Network& net, const ContingencySpec& spec,
                  const ScheduleTensor& p, const ScheduleTensor& theta,
                  double feas_tol = kFeasTol);

// --- Batched prox dispatch ---

/// Effective penalty for a group: the contingency group keeps the base
/// penalty, shared groups see the (K+1)-fold value.
inline double effective_penalty(double rho, int group_k_eff, int num_slices) {
  return group_k_eff > 1 ? rho : rho * static_cast<double>(num_slices);
}

/// Owns inner-ADMM workspaces for iterative kinds (battery, generic QP),
/// one per (contingency slice, device), with KKT factors shared across
/// devices whose left-hand blocks coincide. Analytic kinds need no state.
class ProxEngines {
 public:
  ProxEngines(const Network& net, const ContingencySpec& spec, double rho_p,
              double rho_theta, double omega, int inner_iters, bool warm_start);

  /// Base penalties; shared groups see (K+1)-scaled values. Refactorizes
  /// cached KKT systems (once per distinct matrix) when values change.
  void set_penalties(double rho_p, double rho_theta);

  int inner_iters() const { return inner_iters_; }
  bool warm_start() const { return warm_start_; }
  double omega() const { return omega_; }

  /// Sum over devices of the current inner objective (e.g. battery
  /// discharge cost); a cheap objective term for trace reporting.
  double approx_local_cost(int gi) const;

  QpProxWorkspace& workspace(int gi, int k, int device);
  bool group_is_iterative(int gi) const { return !engines_[gi].empty(); }

 private:
  const Network* net_;
  double rho_p_, rho_theta_;
  double omega_;
  int inner_iters_;
  bool warm_start_;
  // engines_[gi] is empty for analytic kinds, else k_eff*count workspaces.
  std::vector<std::vector<std::unique_ptr<QpProxWorkspace>>> engines_;
  // Shared-factor bookkeeping: sharing_[gi][w] is the representative index
  // whose factor workspace w reuses.
  std::vector<std::vector<size_t>> sharing_;
};

/// Applies the kind-appropriate prox over all devices (and contingency
/// slices for the contingency group). `slice_params[k]` is the parameter
/// table seen by slice k; rho values are the effective penalties for this
/// group. Targets and outputs share the group's tensor shape.
void dispatch_prox(const Network& net, const ContingencySpec& spec,
                   const std::vector<std::vector<GroupParams>>& slice_params,
                   int gi, const GroupTensor& target_p,
                   const GroupTensor& target_theta, double rho_p,
                   double rho_theta, GroupTensor& p_out, GroupTensor& theta_out,
                   ProxEngines* engines);

/// Parameter tables per group and contingency slice, materialized once.
std::vector<std::vector<GroupParams>> materialize_params(
    const Network& net, const ContingencySpec& spec);

}  // namespace gridmp
