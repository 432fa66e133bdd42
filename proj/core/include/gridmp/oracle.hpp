#pragma once

#include "gridmp/dense_qp.hpp"
#include "gridmp/network.hpp"
#include "gridmp/tensor.hpp"

namespace gridmp {

/// The contingency-constrained OPF assembled as one convex QP. Shared
/// groups keep a single schedule variable across contingencies (variable
/// sharing instead of tying rows); the contingency group is duplicated per
/// slice. Variables per group are laid out [p block | theta block] with
/// index ((k*count + d)*tau + i)*T + t, followed by a locals block for
/// battery / generic-QP groups with index (k*count + d)*mu + j.
struct MonolithicQp {
  DenseQp qp;
  int num_slices = 1;             // K+1
  std::vector<int> k_eff;         // per group
  std::vector<int> p_offset;      // per group
  std::vector<int> th_offset;     // per group
  std::vector<int> local_offset;  // per group, -1 when the kind has no locals
  std::vector<int> local_dim;     // per group, locals per (slice, device)
  int balance_row0 = 0;           // equality row (k*N + n)*T + t
  std::vector<int> gen_cap_row0;  // per group: first p <= pmax row, -1 otherwise
  std::vector<int> gen_low_row0;  // per group: first -p <= -pmin row

  int var_p(int g, int k, int d, int i, int t, const Network& net) const {
    const auto& grp = net.groups[g];
    return p_offset[g] +
           (((k * grp.count + d) * grp.terminals_per_device + i) * net.horizon + t);
  }
  int var_th(int g, int k, int d, int i, int t, const Network& net) const {
    const auto& grp = net.groups[g];
    return th_offset[g] +
           (((k * grp.count + d) * grp.terminals_per_device + i) * net.horizon + t);
  }
  int var_local(int g, int k, int d, int j, const Network& net) const {
    return local_offset[g] + (k * net.groups[g].count + d) * local_dim[g] + j;
  }
  int balance_row(int k, int n, int t, const Network& net) const {
    return balance_row0 + (k * net.num_nodes + n) * net.horizon + t;
  }
  int gen_cap_row(int g, int k, int d, int t, const Network& net) const {
    return gen_cap_row0[g] + (k * net.groups[g].count + d) * net.horizon + t;
  }
  int gen_low_row(int g, int k, int d, int t, const Network& net) const {
    return gen_low_row0[g] + (k * net.groups[g].count + d) * net.horizon + t;
  }
};

MonolithicQp assemble(const Network& net, const ContingencySpec& spec);

struct OracleSolution {
  QpStatus status = QpStatus::max_iter;
  double objective = 0.0;
  ScheduleTensor p, theta;
  NodeTensor prices;  // -y of the balance rows, positive at marginal cost
  Eigen::VectorXd x, eq_duals, ineq_duals;
  double kkt_residual = 0.0;
  double infeasibility = 0.0;
  int iterations = 0;
};

/// Solves the assembled QP with the dense interior point method and maps
/// the result back to per-device schedules and node prices.
OracleSolution solve_exact(const MonolithicQp& mqp, const Network& net,
                           double tol = 1e-8);

/// Multipliers of the p <= pmax rows of generator group g, flattened
/// (k, d, t) row-major over the group's slices. The derivative of the
/// optimal cost with respect to p_max is the negative of these values.
std::vector<double> generator_capacity_duals(const MonolithicQp& mqp,
                                             const OracleSolution& sol,
                                             const Network& net, int g);

}  // namespace gridmp
