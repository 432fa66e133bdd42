#include "gridmp/solver.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gridmp/tensor_ops.hpp"
#include "gridmp/util.hpp"

namespace gridmp {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::diverged: return "diverged";
  }
  return "unknown";
}

void SolverConfig::check() const {
  if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (min_iter < 0) throw std::invalid_argument("min_iter must be >= 0");
  if (!(rho_p > 0) || !(rho_theta > 0)) {
    throw std::invalid_argument("penalties must be positive");
  }
  if (!(alpha >= 1.0 && alpha < 2.0)) {
    throw std::invalid_argument("alpha must lie in [1, 2)");
  }
  if (!(adapt_mu > 1.0) || !(adapt_gamma > 1.0) || adapt_every < 1) {
    throw std::invalid_argument("invalid adaptive penalty settings");
  }
  if (battery_inner_iters < 1 || battery_inner_iters > 50) {
    throw std::invalid_argument("battery_inner_iters must lie in [1, 50]");
  }
  if (!(omega > 0)) throw std::invalid_argument("omega must be positive");
  if (trace_every < 1) throw std::invalid_argument("trace_every must be >= 1");
}

SolverState init_state(const Network& net, const ContingencySpec& spec,
                       const Solution* warm) {
  (void)spec;
  const int K1 = net.num_slices();
  SolverState st;
  st.p = make_schedule(net);
  st.theta = make_schedule(net);
  st.u = NodeTensor(K1, net.num_nodes, net.horizon);
  st.v = make_schedule(net, /*varying=*/true);

  if (warm) {
    if (!same_shape(warm->p, st.p) || !same_shape(warm->theta, st.theta)) {
      throw std::invalid_argument("warm start schedules do not match the network");
    }
    if (warm->u.k_eff != st.u.k_eff || warm->u.nodes != st.u.nodes ||
        warm->u.horizon != st.u.horizon || !same_shape(warm->v, st.v)) {
      throw std::invalid_argument("warm start duals do not match the network");
    }
    st.p = warm->p;
    st.theta = warm->theta;
    st.u = warm->u;
    st.v = warm->v;
    st.rho_p = warm->rho_p;
    st.rho_theta = warm->rho_theta;
  }
  st.xi = node_average(st.theta, net, K1);
  st.z = node_residual(st.p, node_average(st.p, net, K1), net);
  return st;
}

void align_penalties(SolverState& st, double rho_p, double rho_theta) {
  // The stored duals are penalty-scaled; keep the underlying multipliers
  // unchanged when moving to the configured initial penalties.
  if (st.rho_p != rho_p) {
    const double f = st.rho_p / rho_p;
    for (double& x : st.u.data) x *= f;
    st.rho_p = rho_p;
  }
  if (st.rho_theta != rho_theta) {
    const double f = st.rho_theta / rho_theta;
    for (auto& g : st.v) {
      for (double& x : g.data) x *= f;
    }
    st.rho_theta = rho_theta;
  }
}

bool check_convergence(const Residuals& res, const Network& net, double tol) {
  const double bound =
      tol * std::sqrt(2.0 * net.num_terminals() * net.horizon * net.num_slices());
  return res.max_norm() <= bound;
}

Residuals iterate(SolverState& state, const Network& net,
                  const ContingencySpec& spec,
                  const std::vector<std::vector<GroupParams>>& slice_params,
                  const SolverConfig& config, ProxEngines& engines,
                  IterationRecord* record) {
  const int K1 = net.num_slices();
  const double alpha = config.alpha;
  const size_t n_groups = net.groups.size();

  if (record) {
    record->target_p.assign(n_groups, GroupTensor());
    record->target_theta.assign(n_groups, GroupTensor());
    record->rho_p = state.rho_p;
    record->rho_theta = state.rho_theta;
    record->alpha = alpha;
    record->rescale_u = 1.0;
    record->rescale_v = 1.0;
  }

  // Prox targets: z - u and xi - v at terminal level, contingency-averaged
  // for the shared groups.
  const ScheduleTensor gather_u = gather_to_terminals(state.u, net);
  const ScheduleTensor gather_xi = gather_to_terminals(state.xi, net);

  for (size_t gi = 0; gi < n_groups; ++gi) {
    const int g = static_cast<int>(gi);
    const int keff = net.k_eff(g);
    GroupTensor full_p = state.z[gi];
    GroupTensor full_th = gather_xi[gi];
    for (size_t i = 0; i < full_p.data.size(); ++i) {
      full_p.data[i] -= gather_u[gi].data[i];
      full_th.data[i] -= state.v[gi].data[i];
    }
    GroupTensor target_p, target_th;
    if (keff == K1) {
      target_p = std::move(full_p);
      target_th = std::move(full_th);
    } else {
      target_p = contingency_average(full_p);
      target_th = contingency_average(full_th);
    }
    const double rp = effective_penalty(state.rho_p, keff, K1);
    const double rt = effective_penalty(state.rho_theta, keff, K1);
    dispatch_prox(net, spec, slice_params, g, target_p, target_th, rp, rt,
                  state.p[gi], state.theta[gi], &engines);
    if (record) {
      record->target_p[gi] = std::move(target_p);
      record->target_theta[gi] = std::move(target_th);
    }
  }

  // Projections of the new iterate.
  const NodeTensor p_bar = node_average(state.p, net, K1);
  const NodeTensor th_bar = node_average(state.theta, net, K1);
  const ScheduleTensor p_resid = node_residual(state.p, p_bar, net);
  const ScheduleTensor th_resid = node_residual(state.theta, th_bar, net);

  Residuals res;
  res.primal_p = std::sqrt(squared_norm_terminal_weighted(p_bar, net));
  res.primal_theta = std::sqrt(squared_norm(th_resid));

  // Duplicate updates; the change in (z, xi) is the dual residual.
  double dz2 = 0.0;
  for (size_t gi = 0; gi < n_groups; ++gi) {
    auto& z = state.z[gi].data;
    const auto& pr = p_resid[gi].data;
    if (alpha == 1.0) {
      for (size_t i = 0; i < z.size(); ++i) {
        const double d = pr[i] - z[i];
        dz2 += d * d;
        z[i] = pr[i];
      }
    } else {
      for (size_t i = 0; i < z.size(); ++i) {
        const double znew = alpha * pr[i] + (1.0 - alpha) * z[i];
        const double d = znew - z[i];
        dz2 += d * d;
        z[i] = znew;
      }
    }
  }
  const std::vector<int> degree = node_degree(net);
  double dxi2 = 0.0;
  for (int k = 0; k < K1; ++k) {
    for (int n = 0; n < net.num_nodes; ++n) {
      const double w = degree[n];
      for (int t = 0; t < net.horizon; ++t) {
        const double old = state.xi.at(k, n, t);
        const double fresh = th_bar.at(k, n, t);
        const double next = alpha == 1.0 ? fresh : alpha * fresh + (1.0 - alpha) * old;
        const double d = next - old;
        dxi2 += w * d * d;
        state.xi.at(k, n, t) = next;
      }
    }
  }
  res.dual_p = state.rho_p * std::sqrt(dz2);
  res.dual_theta = state.rho_theta * std::sqrt(dxi2);

  // Scaled price updates: u += alpha * avg(p), v += alpha * resid(theta).
  for (size_t i = 0; i < state.u.data.size(); ++i) {
    state.u.data[i] += alpha * p_bar.data[i];
  }
  axpy(alpha, th_resid, state.v);

  state.iter++;
  return res;
}

std::pair<double, double> adapt_penalties(SolverState& state, const Residuals& res,
                                          const SolverConfig& config,
                                          ProxEngines& engines) {
  const double mu = config.adapt_mu;
  const double gamma = config.adapt_gamma;
  double new_rho_p = state.rho_p;
  double new_rho_theta = state.rho_theta;
  if (res.primal_p > mu * res.dual_p) {
    new_rho_p *= gamma;
  } else if (res.dual_p > mu * res.primal_p) {
    new_rho_p /= gamma;
  }
  if (res.primal_theta > mu * res.dual_theta) {
    new_rho_theta *= gamma;
  } else if (res.dual_theta > mu * res.primal_theta) {
    new_rho_theta /= gamma;
  }
  const double fu = state.rho_p / new_rho_p;
  const double fv = state.rho_theta / new_rho_theta;
  if (fu != 1.0) {
    for (double& x : state.u.data) x *= fu;
  }
  if (fv != 1.0) {
    for (auto& g : state.v) {
      for (double& x : g.data) x *= fv;
    }
  }
  state.rho_p = new_rho_p;
  state.rho_theta = new_rho_theta;
  engines.set_penalties(new_rho_p, new_rho_theta);
  return {fu, fv};
}

double approx_objective(const Network& net,
                        const std::vector<std::vector<GroupParams>>& slice_params,
                        const ScheduleTensor& p, const ProxEngines& engines) {
  const int K1 = net.num_slices();
  const int T = net.horizon;
  double obj = 0.0;
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const int keff = net.k_eff(static_cast<int>(gi));
    const double w = keff > 1 ? 1.0 / static_cast<double>(K1) : 1.0;
    switch (g.kind) {
      case DeviceKind::generator: {
        for (int k = 0; k < keff; ++k) {
          const auto& gp = std::get<GeneratorParams>(slice_params[gi][k]);
          double c = 0.0;
          for (int d = 0; d < g.count; ++d) {
            const double a = gp.quad_cost[d], b = gp.linear_cost[d];
            for (int t = 0; t < T; ++t) {
              const double pv = p[gi].at(k, d, 0, t);
              c += a * pv * pv + b * pv;
            }
          }
          obj += w * c;
        }
        break;
      }
      case DeviceKind::battery:
      case DeviceKind::generic_qp:
        obj += w * engines.approx_local_cost(static_cast<int>(gi));
        break;
      default:
        break;  // loads and lines carry indicator costs only
    }
  }
  return obj;
}

Solution solve(const Network& net, const ContingencySpec& spec,
               const SolverConfig& config, const Solution* warm) {
  config.check();
  {
    const auto errs = validate(net, spec);
    if (!errs.empty()) {
      std::ostringstream os;
      os << "invalid network:";
      for (size_t i = 0; i < errs.size() && i < 5; ++i) os << "\n  " << errs[i];
      throw std::invalid_argument(os.str());
    }
  }

  const auto slice_params = materialize_params(net, spec);
  ProxEngines engines(net, spec, config.rho_p, config.rho_theta, config.omega,
                      config.battery_inner_iters, config.inner_warm_start);
  SolverState state = init_state(net, spec, warm);
  align_penalties(state, config.rho_p, config.rho_theta);

  Solution sol;
  Residuals res;
  bool traced_last = false;
  for (int it = 1; it <= config.max_iter; ++it) {
    res = iterate(state, net, spec, slice_params, config, engines);
    sol.iterations = it;
    if (!res.finite() || res.max_norm() > config.divergence_rms) {
      sol.status = SolveStatus::diverged;
      sol.message = "diverged at iteration " + std::to_string(it) +
                    " (residual rms not finite or above limit)";
      break;
    }
    traced_last = (it % config.trace_every == 0);
    if (traced_last) {
      sol.trace.push_back({it, res, state.rho_p, state.rho_theta,
                           approx_objective(net, slice_params, state.p, engines)});
    }
    if (it >= config.min_iter && check_convergence(res, net, config.tol)) {
      sol.status = SolveStatus::converged;
      break;
    }
    if (it == config.max_iter) {
      sol.status = SolveStatus::max_iter;
      break;
    }
    if (config.adaptive && it % config.adapt_every == 0) {
      adapt_penalties(state, res, config, engines);
    }
  }
  if (sol.status != SolveStatus::diverged && !traced_last) {
    sol.trace.push_back({sol.iterations, res, state.rho_p, state.rho_theta,
                         approx_objective(net, slice_params, state.p, engines)});
  }

  sol.p = state.p;
  sol.theta = state.theta;
  sol.u = state.u;
  sol.v = state.v;
  sol.rho_p = state.rho_p;
  sol.rho_theta = state.rho_theta;
  sol.final_residuals = res;
  sol.prices = state.u;
  for (double& x : sol.prices.data) x *= -state.rho_p;

  const double exact = total_cost(net, spec, sol.p, sol.theta, kFeasTol);
  if (std::isfinite(exact)) {
    sol.objective = exact;
    sol.objective_exact = true;
  } else {
    sol.objective = approx_objective(net, slice_params, sol.p, engines);
    sol.objective_exact = false;
  }
  return sol;
}

}  // namespace gridmp
