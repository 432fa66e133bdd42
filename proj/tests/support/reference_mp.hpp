#pragma once

// Minimal simplified message-passing iteration (no stored duplicate
// variables, no over-relaxation): the projected iterates are recomputed
// from the current schedules at the start of every pass. Used as the
// bitwise reference for the production solver at alpha = 1.

#include "gridmp/devices.hpp"
#include "gridmp/solver.hpp"
#include "gridmp/tensor_ops.hpp"

namespace gridmp::testing {

struct RefState {
  ScheduleTensor p, theta;
  NodeTensor u;
  ScheduleTensor v;
  double rho_p = 1.0, rho_theta = 1.0;
};

inline RefState reference_init(const Network& net, double rho_p, double rho_theta) {
  RefState st;
  st.p = make_schedule(net);
  st.theta = make_schedule(net);
  st.u = NodeTensor(net.num_slices(), net.num_nodes, net.horizon);
  st.v = make_schedule(net, true);
  st.rho_p = rho_p;
  st.rho_theta = rho_theta;
  return st;
}

inline Residuals reference_iterate(RefState& st, const Network& net,
                                   const ContingencySpec& spec,
                                   const std::vector<std::vector<GroupParams>>& params,
                                   ProxEngines& engines) {
  const int K1 = net.num_slices();

  // Projected iterates of the previous schedules, recomputed fresh.
  const ScheduleTensor prev_resid =
      node_residual(st.p, node_average(st.p, net, K1), net);
  const NodeTensor prev_bar = node_average(st.theta, net, K1);

  const ScheduleTensor gather_u = gather_to_terminals(st.u, net);
  const ScheduleTensor gather_bar = gather_to_terminals(prev_bar, net);

  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const int g = static_cast<int>(gi);
    const int keff = net.k_eff(g);
    GroupTensor full_p = prev_resid[gi];
    GroupTensor full_th = gather_bar[gi];
    for (size_t i = 0; i < full_p.data.size(); ++i) {
      full_p.data[i] -= gather_u[gi].data[i];
      full_th.data[i] -= st.v[gi].data[i];
    }
    GroupTensor target_p, target_th;
    if (keff == K1) {
      target_p = std::move(full_p);
      target_th = std::move(full_th);
    } else {
      target_p = contingency_average(full_p);
      target_th = contingency_average(full_th);
    }
    const double rp = effective_penalty(st.rho_p, keff, K1);
    const double rt = effective_penalty(st.rho_theta, keff, K1);
    dispatch_prox(net, spec, params, g, target_p, target_th, rp, rt, st.p[gi],
                  st.theta[gi], &engines);
  }

  const NodeTensor p_bar = node_average(st.p, net, K1);
  const NodeTensor th_bar = node_average(st.theta, net, K1);
  const ScheduleTensor p_resid = node_residual(st.p, p_bar, net);
  const ScheduleTensor th_resid = node_residual(st.theta, th_bar, net);

  Residuals res;
  res.primal_p = std::sqrt(squared_norm_terminal_weighted(p_bar, net));
  res.primal_theta = std::sqrt(squared_norm(th_resid));

  double dz2 = 0.0;
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& now = p_resid[gi].data;
    const auto& prev = prev_resid[gi].data;
    for (size_t i = 0; i < now.size(); ++i) {
      const double d = now[i] - prev[i];
      dz2 += d * d;
    }
  }
  const std::vector<int> degree = node_degree(net);
  double dxi2 = 0.0;
  for (int k = 0; k < K1; ++k) {
    for (int n = 0; n < net.num_nodes; ++n) {
      const double w = degree[n];
      for (int t = 0; t < net.horizon; ++t) {
        const double d = th_bar.at(k, n, t) - prev_bar.at(k, n, t);
        dxi2 += w * d * d;
      }
    }
  }
  res.dual_p = st.rho_p * std::sqrt(dz2);
  res.dual_theta = st.rho_theta * std::sqrt(dxi2);

  for (size_t i = 0; i < st.u.data.size(); ++i) {
    st.u.data[i] += 1.0 * p_bar.data[i];
  }
  axpy(1.0, th_resid, st.v);
  return res;
}

}  // namespace gridmp::testing
