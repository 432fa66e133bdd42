#include "gridmp/oracle.hpp"

#include <array>
#include <stdexcept>
#include <vector>

namespace gridmp {

MonolithicQp assemble(const Network& net, const ContingencySpec& spec) {
  {
    const auto errs = validate(net, spec);
    if (!errs.empty()) {
      throw std::invalid_argument("assemble: invalid network: " + errs.front());
    }
  }
  const int T = net.horizon;
  const int N = net.num_nodes;
  const int K1 = net.num_slices();
  const int G = static_cast<int>(net.groups.size());

  MonolithicQp m;
  m.num_slices = K1;
  m.k_eff.resize(G);
  m.p_offset.resize(G);
  m.th_offset.resize(G);
  m.local_offset.assign(G, -1);
  m.local_dim.assign(G, 0);
  m.gen_cap_row0.assign(G, -1);
  m.gen_low_row0.assign(G, -1);

  // --- Variable layout ---
  int nv = 0;
  for (int g = 0; g < G; ++g) {
    const auto& grp = net.groups[g];
    const int keff = net.k_eff(g);
    m.k_eff[g] = keff;
    const int sched = keff * grp.count * grp.terminals_per_device * T;
    m.p_offset[g] = nv;
    nv += sched;
    m.th_offset[g] = nv;
    nv += sched;
    if (grp.kind == DeviceKind::battery) {
      m.local_dim[g] = 3 * T + 1;
    } else if (grp.kind == DeviceKind::generic_qp) {
      m.local_dim[g] = std::get<GenericQpParams>(grp.params).num_locals;
    }
    if (m.local_dim[g] > 0) {
      m.local_offset[g] = nv;
      nv += keff * grp.count * m.local_dim[g];
    }
  }

  // --- Count rows ---
  const std::vector<int> degree = node_degree(net);
  int me = K1 * N * T;  // power balance
  for (int n = 0; n < N; ++n) me += K1 * (degree[n] - 1) * T;  // phase consistency
  int mi = 0;
  for (int g = 0; g < G; ++g) {
    const auto& grp = net.groups[g];
    const int keff = m.k_eff[g];
    switch (grp.kind) {
      case DeviceKind::generator:
        mi += 2 * keff * grp.count * T;
        break;
      case DeviceKind::fixed_load:
        me += keff * grp.count * T;
        break;
      case DeviceKind::ac_line: {
        me += 2 * keff * grp.count * T;
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& ap = std::get<AcLineParams>(params);
          for (int d = 0; d < grp.count; ++d) {
            if (!(ap.capacity[d] == 0.0 && ap.susceptance[d] == 0.0)) {
              mi += 2 * T;  // outaged lines carry no capacity rows
            }
          }
        }
        break;
      }
      case DeviceKind::dc_line:
        me += keff * grp.count * T;
        mi += 2 * keff * grp.count * T;
        break;
      case DeviceKind::battery:
        me += keff * grp.count * (2 * T + 2);
        mi += keff * grp.count * (6 * T + 2);
        break;
      case DeviceKind::generic_qp:
        mi += keff * grp.count *
              std::get<GenericQpParams>(grp.params).num_inequalities;
        break;
    }
  }

  DenseQp& qp = m.qp;
  qp.P = Eigen::MatrixXd::Zero(nv, nv);
  qp.c = Eigen::VectorXd::Zero(nv);
  qp.A = Eigen::MatrixXd::Zero(me, nv);
  qp.b = Eigen::VectorXd::Zero(me);
  qp.G = Eigen::MatrixXd::Zero(mi, nv);
  qp.h = Eigen::VectorXd::Zero(mi);

  // --- Power balance: sum of terminal injections at each node is zero ---
  m.balance_row0 = 0;
  for (int g = 0; g < G; ++g) {
    const auto& grp = net.groups[g];
    const int keff = m.k_eff[g];
    for (int k = 0; k < K1; ++k) {
      const int ks = keff == 1 ? 0 : k;
      for (int d = 0; d < grp.count; ++d) {
        for (int i = 0; i < grp.terminals_per_device; ++i) {
          const int n = grp.node_of(d, i);
          for (int t = 0; t < T; ++t) {
            qp.A(m.balance_row(k, n, t, net), m.var_p(g, ks, d, i, t, net)) += 1.0;
          }
        }
      }
    }
  }
  int erow = K1 * N * T;

  // --- Phase consistency: theta equal to the node's first terminal ---
  {
    std::vector<std::vector<std::array<int, 3>>> node_terms(N);
    for (int g = 0; g < G; ++g) {
      const auto& grp = net.groups[g];
      for (int i = 0; i < grp.terminals_per_device; ++i) {
        for (int d = 0; d < grp.count; ++d) {
          node_terms[grp.node_of(d, i)].push_back({g, d, i});
        }
      }
    }
    for (int n = 0; n < N; ++n) {
      const auto& terms = node_terms[n];
      for (int k = 0; k < K1; ++k) {
        const auto& ref = terms.front();
        const int kref = m.k_eff[ref[0]] == 1 ? 0 : k;
        for (size_t j = 1; j < terms.size(); ++j) {
          const auto& tj = terms[j];
          const int kj = m.k_eff[tj[0]] == 1 ? 0 : k;
          for (int t = 0; t < T; ++t) {
            qp.A(erow, m.var_th(tj[0], kj, tj[1], tj[2], t, net)) = 1.0;
            qp.A(erow, m.var_th(ref[0], kref, ref[1], ref[2], t, net)) -= 1.0;
            ++erow;
          }
        }
      }
    }
  }

  // --- Device rows and objective ---
  int irow = 0;
  for (int g = 0; g < G; ++g) {
    const auto& grp = net.groups[g];
    const int keff = m.k_eff[g];
    const double w = keff > 1 ? 1.0 / static_cast<double>(K1) : 1.0;
    switch (grp.kind) {
      case DeviceKind::generator: {
        m.gen_cap_row0[g] = irow;
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& gp = std::get<GeneratorParams>(params);
          for (int d = 0; d < grp.count; ++d) {
            for (int t = 0; t < T; ++t) {
              const int vp = m.var_p(g, k, d, 0, t, net);
              qp.P(vp, vp) += 2.0 * w * gp.quad_cost[d];
              qp.c(vp) += w * gp.linear_cost[d];
              qp.G(irow, vp) = 1.0;
              qp.h(irow) = gp.p_max[d * T + t];
              ++irow;
            }
          }
        }
        m.gen_low_row0[g] = irow;
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& gp = std::get<GeneratorParams>(params);
          for (int d = 0; d < grp.count; ++d) {
            for (int t = 0; t < T; ++t) {
              const int vp = m.var_p(g, k, d, 0, t, net);
              qp.G(irow, vp) = -1.0;
              qp.h(irow) = -gp.p_min[d * T + t];
              ++irow;
            }
          }
        }
        break;
      }
      case DeviceKind::fixed_load: {
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& lp = std::get<FixedLoadParams>(params);
          for (int d = 0; d < grp.count; ++d) {
            for (int t = 0; t < T; ++t) {
              qp.A(erow, m.var_p(g, k, d, 0, t, net)) = 1.0;
              qp.b(erow) = lp.p_load[d * T + t];
              ++erow;
            }
          }
        }
        break;
      }
      case DeviceKind::ac_line: {
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& ap = std::get<AcLineParams>(params);
          for (int d = 0; d < grp.count; ++d) {
            const bool outaged = ap.capacity[d] == 0.0 && ap.susceptance[d] == 0.0;
            for (int t = 0; t < T; ++t) {
              const int p1 = m.var_p(g, k, d, 0, t, net);
              const int p2 = m.var_p(g, k, d, 1, t, net);
              const int t1 = m.var_th(g, k, d, 0, t, net);
              const int t2 = m.var_th(g, k, d, 1, t, net);
              qp.A(erow, p1) = 1.0;
              qp.A(erow, p2) = 1.0;
              ++erow;
              // p2 = b (th1 - th2); with b = 0 this pins the flow to zero.
              qp.A(erow, p2) = 1.0;
              qp.A(erow, t1) = -ap.susceptance[d];
              qp.A(erow, t2) = ap.susceptance[d];
              ++erow;
              if (!outaged) {
                qp.G(irow, p2) = 1.0;
                qp.h(irow) = ap.capacity[d];
                ++irow;
                qp.G(irow, p2) = -1.0;
                qp.h(irow) = ap.capacity[d];
                ++irow;
              }
            }
          }
        }
        break;
      }
      case DeviceKind::dc_line: {
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& dp = std::get<DcLineParams>(params);
          for (int d = 0; d < grp.count; ++d) {
            for (int t = 0; t < T; ++t) {
              const int p1 = m.var_p(g, k, d, 0, t, net);
              const int p2 = m.var_p(g, k, d, 1, t, net);
              qp.A(erow, p1) = 1.0;
              qp.A(erow, p2) = 1.0;
              ++erow;
              qp.G(irow, p2) = 1.0;
              qp.h(irow) = dp.capacity[d];
              ++irow;
              qp.G(irow, p2) = -1.0;
              qp.h(irow) = dp.capacity[d];
              ++irow;
            }
          }
        }
        break;
      }
      case DeviceKind::battery: {
        const int mu = m.local_dim[g];
        (void)mu;
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& bp = std::get<BatteryParams>(params);
          for (int d = 0; d < grp.count; ++d) {
            const auto c_at = [&](int t) { return m.var_local(g, k, d, t, net); };
            const auto dis_at = [&](int t) { return m.var_local(g, k, d, T + t, net); };
            const auto soc_at = [&](int t) { return m.var_local(g, k, d, 2 * T + t, net); };
            for (int t = 0; t < T; ++t) {
              qp.c(dis_at(t)) += w * bp.discharge_cost[d];
              // p = discharge - charge
              qp.A(erow, m.var_p(g, k, d, 0, t, net)) = 1.0;
              qp.A(erow, dis_at(t)) = -1.0;
              qp.A(erow, c_at(t)) = 1.0;
              ++erow;
              // soc[t+1] = soc[t] + eff*charge[t] - discharge[t]
              qp.A(erow, soc_at(t + 1)) = 1.0;
              qp.A(erow, soc_at(t)) = -1.0;
              qp.A(erow, c_at(t)) = -bp.efficiency[d];
              qp.A(erow, dis_at(t)) = 1.0;
              ++erow;
            }
            qp.A(erow++, soc_at(0)) = 1.0;
            qp.A(erow++, soc_at(T)) = 1.0;
            for (int t = 0; t < T; ++t) {
              qp.G(irow, c_at(t)) = 1.0;
              qp.h(irow++) = bp.power_capacity[d];
              qp.G(irow, c_at(t)) = -1.0;
              ++irow;
              qp.G(irow, dis_at(t)) = 1.0;
              qp.h(irow++) = bp.power_capacity[d];
              qp.G(irow, dis_at(t)) = -1.0;
              ++irow;
            }
            for (int t = 0; t <= T; ++t) {
              qp.G(irow, soc_at(t)) = 1.0;
              qp.h(irow++) = bp.duration[d] * bp.power_capacity[d];
              qp.G(irow, soc_at(t)) = -1.0;
              ++irow;
            }
          }
        }
        break;
      }
      case DeviceKind::generic_qp: {
        const int tau = grp.terminals_per_device;
        for (int k = 0; k < keff; ++k) {
          const auto params = params_for_slice(net, spec, g, k);
          const auto& qpp = std::get<GenericQpParams>(params);
          const int mu = qpp.num_locals;
          const int mrows = qpp.num_inequalities;
          for (int d = 0; d < grp.count; ++d) {
            for (int a = 0; a < mu; ++a) {
              qp.c(m.var_local(g, k, d, a, net)) += w * qpp.q[d][a];
              for (int bb = 0; bb < mu; ++bb) {
                const double v = qpp.Q[d][a * mu + bb];
                if (v != 0.0) {
                  const int va = m.var_local(g, k, d, a, net);
                  const int vb = m.var_local(g, k, d, bb, net);
                  qp.P(va, vb) += w * v;
                  qp.P(vb, va) += w * v;
                }
              }
            }
            for (int r = 0; r < mrows; ++r) {
              for (int i = 0; i < tau; ++i) {
                for (int t = 0; t < T; ++t) {
                  const double v1 = qpp.A1[d][r * tau * T + i * T + t];
                  const double v2 = qpp.A2[d][r * tau * T + i * T + t];
                  if (v1 != 0.0) qp.G(irow, m.var_p(g, k, d, i, t, net)) += v1;
                  if (v2 != 0.0) qp.G(irow, m.var_th(g, k, d, i, t, net)) += v2;
                }
              }
              for (int a = 0; a < mu; ++a) {
                const double v = qpp.A3[d][r * mu + a];
                if (v != 0.0) qp.G(irow, m.var_local(g, k, d, a, net)) += v;
              }
              qp.h(irow) = qpp.b[d][r];
              ++irow;
            }
          }
        }
        break;
      }
    }
  }
  if (erow != me || irow != mi) {
    throw std::logic_error("assemble: row bookkeeping mismatch");
  }
  return m;
}

OracleSolution solve_exact(const MonolithicQp& mqp, const Network& net,
                           double tol) {
  OracleSolution out;
  QpResult r = solve_dense_qp(mqp.qp, tol, 200);
  out.status = r.status;
  out.objective = r.objective;
  out.x = r.x;
  out.eq_duals = r.y;
  out.ineq_duals = r.z;
  out.kkt_residual = r.kkt_residual;
  out.infeasibility = r.infeasibility;
  out.iterations = r.iterations;

  const int T = net.horizon;
  const int K1 = mqp.num_slices;
  out.p = make_schedule(net);
  out.theta = make_schedule(net);
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const int g = static_cast<int>(gi);
    const auto& grp = net.groups[gi];
    for (int k = 0; k < mqp.k_eff[g]; ++k) {
      for (int d = 0; d < grp.count; ++d) {
        for (int i = 0; i < grp.terminals_per_device; ++i) {
          for (int t = 0; t < T; ++t) {
            out.p[gi].at(k, d, i, t) = r.x[mqp.var_p(g, k, d, i, t, net)];
            out.theta[gi].at(k, d, i, t) = r.x[mqp.var_th(g, k, d, i, t, net)];
          }
        }
      }
    }
  }
  out.prices = NodeTensor(K1, net.num_nodes, T);
  for (int k = 0; k < K1; ++k) {
    for (int n = 0; n < net.num_nodes; ++n) {
      for (int t = 0; t < T; ++t) {
        out.prices.at(k, n, t) = -r.y[mqp.balance_row(k, n, t, net)];
      }
    }
  }
  return out;
}

std::vector<double> generator_capacity_duals(const MonolithicQp& mqp,
                                             const OracleSolution& sol,
                                             const Network& net, int g) {
  if (mqp.gen_cap_row0[g] < 0) {
    throw std::invalid_argument("group is not a generator group");
  }
  const auto& grp = net.groups[g];
  const int T = net.horizon;
  std::vector<double> duals(static_cast<size_t>(mqp.k_eff[g]) * grp.count * T);
  size_t i = 0;
  for (int k = 0; k < mqp.k_eff[g]; ++k) {
    for (int d = 0; d < grp.count; ++d) {
      for (int t = 0; t < T; ++t) {
        duals[i++] = sol.ineq_duals[mqp.gen_cap_row(g, k, d, t, net)];
      }
    }
  }
  return duals;
}

}  // namespace gridmp
