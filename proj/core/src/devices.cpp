#include "gridmp/devices.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gridmp/dense_qp.hpp"

namespace gridmp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}
}  // namespace

void prox_generator(double quad_cost, double linear_cost,
                    std::span<const double> p_min, std::span<const double> p_max,
                    std::span<const double> x, double rho,
                    std::span<double> p_out) {
  const double denom = 2.0 * quad_cost + rho;
  for (size_t t = 0; t < x.size(); ++t) {
    p_out[t] = clamp((rho * x[t] - linear_cost) / denom, p_min[t], p_max[t]);
  }
}

void prox_fixed_load(std::span<const double> p_load, std::span<double> p_out) {
  for (size_t t = 0; t < p_load.size(); ++t) p_out[t] = p_load[t];
}

void prox_ac_line(double capacity, double susceptance,
                  std::span<const double> x1, std::span<const double> x2,
                  std::span<const double> y1, std::span<const double> y2,
                  double rho_p, double rho_theta,
                  std::span<double> p1, std::span<double> p2,
                  std::span<double> th1, std::span<double> th2) {
  const size_t T = x1.size();
  if (susceptance == 0.0) {
    // Outaged line: flow pinned to zero, phases decoupled.
    for (size_t t = 0; t < T; ++t) {
      p1[t] = 0.0;
      p2[t] = 0.0;
      th1[t] = y1[t];
      th2[t] = y2[t];
    }
    return;
  }
  const double b = susceptance;
  const double denom = 2.0 * rho_p + rho_theta / (2.0 * b * b);
  for (size_t t = 0; t < T; ++t) {
    const double num = rho_p * (x2[t] - x1[t]) + rho_theta * (y1[t] - y2[t]) / (2.0 * b);
    const double flow = clamp(num / denom, -capacity, capacity);
    const double mid = 0.5 * (y1[t] + y2[t]);
    p2[t] = flow;
    p1[t] = -flow;
    th2[t] = mid - flow / (2.0 * b);
    th1[t] = mid + flow / (2.0 * b);
  }
}

void prox_dc_line(double capacity, std::span<const double> x1,
                  std::span<const double> x2, std::span<double> p1,
                  std::span<double> p2) {
  for (size_t t = 0; t < x1.size(); ++t) {
    const double flow = clamp(0.5 * (x2[t] - x1[t]), -capacity, capacity);
    p2[t] = flow;
    p1[t] = -flow;
  }
}

void prox_battery(QpProxWorkspace& ws, std::span<const double> x, int iters,
                  std::span<double> p_out) {
  std::vector<double> y(x.size(), 0.0), th(x.size());
  ws.solve(x, y, iters, p_out, th);
}

namespace {

// Exact cost of one QpDeviceForm device at fixed (p, theta): a dense QP over
// the local variables with feas_tol slack on the constraint rows. Hard
// equality rows are widened to a +/- feas_tol band.
double qp_form_cost(const QpDeviceForm& form, std::span<const double> p,
                    std::span<const double> theta, double feas_tol) {
  const int nt = form.tau * form.horizon;
  const int mu = form.num_locals;
  const int m = form.num_ineq;
  const int meq = form.num_eq;
  Eigen::VectorXd rhs = form.b;
  for (int r = 0; r < m; ++r) {
    double dot = 0.0;
    for (int c = 0; c < nt; ++c) dot += form.A1(r, c) * p[c] + form.A2(r, c) * theta[c];
    rhs[r] -= dot;
  }
  rhs.array() += feas_tol;
  Eigen::VectorXd erhs(meq);
  for (int r = 0; r < meq; ++r) {
    double dot = 0.0;
    for (int c = 0; c < nt; ++c) dot += form.E1(r, c) * p[c] + form.E2(r, c) * theta[c];
    erhs[r] = form.e[r] - dot;
  }
  if (mu == 0) {
    const bool ok = (rhs.array() >= 0.0).all() &&
                    (erhs.array().abs() <= feas_tol).all();
    return ok ? 0.0 : kInf;
  }
  DenseQp qp;
  qp.P = form.Q + form.Q.transpose();
  qp.c = form.q;
  qp.A.resize(0, mu);
  qp.b.resize(0);
  qp.G.resize(m + 2 * meq, mu);
  qp.h.resize(m + 2 * meq);
  qp.G.topRows(m) = form.A3;
  qp.h.head(m) = rhs;
  qp.G.middleRows(m, meq) = form.E3;
  qp.h.segment(m, meq) = erhs.array() + feas_tol;
  qp.G.bottomRows(meq) = -form.E3;
  qp.h.tail(meq) = feas_tol - erhs.array();
  QpResult r = solve_dense_qp(qp, 1e-9, 100);
  if (r.status == QpStatus::infeasible) return kInf;
  return r.objective;
}

}  // namespace

std::vector<double> group_cost(const Network& net, const ContingencySpec& spec,
                               int gi, int k, const GroupTensor& p,
                               const GroupTensor& theta, double feas_tol) {
  const auto& g = net.groups[gi];
  const int T = net.horizon;
  const GroupParams params = params_for_slice(net, spec, gi, k);
  std::vector<double> cost(g.count, 0.0);

  switch (g.kind) {
    case DeviceKind::generator: {
      const auto& gp = std::get<GeneratorParams>(params);
      for (int d = 0; d < g.count; ++d) {
        double c = 0.0;
        for (int t = 0; t < T; ++t) {
          const double pv = p.at(k, d, 0, t);
          if (pv < gp.p_min[d * T + t] - feas_tol ||
              pv > gp.p_max[d * T + t] + feas_tol) {
            c = kInf;
            break;
          }
          c += gp.quad_cost[d] * pv * pv + gp.linear_cost[d] * pv;
        }
        cost[d] = c;
      }
      break;
    }
    case DeviceKind::fixed_load: {
      const auto& lp = std::get<FixedLoadParams>(params);
      for (int d = 0; d < g.count; ++d) {
        for (int t = 0; t < T; ++t) {
          if (std::abs(p.at(k, d, 0, t) - lp.p_load[d * T + t]) > feas_tol) {
            cost[d] = kInf;
            break;
          }
        }
      }
      break;
    }
    case DeviceKind::ac_line: {
      const auto& ap = std::get<AcLineParams>(params);
      for (int d = 0; d < g.count; ++d) {
        for (int t = 0; t < T; ++t) {
          const double p1 = p.at(k, d, 0, t), p2 = p.at(k, d, 1, t);
          const double t1 = theta.at(k, d, 0, t), t2 = theta.at(k, d, 1, t);
          if (std::abs(p1 + p2) > feas_tol ||
              std::abs(p2) > ap.capacity[d] + feas_tol ||
              std::abs(p2 - ap.susceptance[d] * (t1 - t2)) > feas_tol) {
            cost[d] = kInf;
            break;
          }
        }
      }
      break;
    }
    case DeviceKind::dc_line: {
      const auto& dp = std::get<DcLineParams>(params);
      for (int d = 0; d < g.count; ++d) {
        for (int t = 0; t < T; ++t) {
          const double p1 = p.at(k, d, 0, t), p2 = p.at(k, d, 1, t);
          if (std::abs(p1 + p2) > feas_tol || std::abs(p2) > dp.capacity[d] + feas_tol) {
            cost[d] = kInf;
            break;
          }
        }
      }
      break;
    }
    case DeviceKind::battery: {
      const auto& bp = std::get<BatteryParams>(params);
      for (int d = 0; d < g.count; ++d) {
        const QpDeviceForm form =
            battery_qp_form(bp.discharge_cost[d], bp.efficiency[d],
                            bp.power_capacity[d], bp.duration[d], T);
        std::vector<double> pd(T), td(T, 0.0);
        for (int t = 0; t < T; ++t) pd[t] = p.at(k, d, 0, t);
        cost[d] = qp_form_cost(form, pd, td, feas_tol);
      }
      break;
    }
    case DeviceKind::generic_qp: {
      const auto& qp = std::get<GenericQpParams>(params);
      const int tau = g.terminals_per_device;
      for (int d = 0; d < g.count; ++d) {
        QpDeviceForm form;
        form.tau = tau;
        form.horizon = T;
        form.num_locals = qp.num_locals;
        form.num_ineq = qp.num_inequalities;
        const int mu = qp.num_locals, m = qp.num_inequalities, nt = tau * T;
        form.Q = Eigen::Map<const Eigen::MatrixXd>(qp.Q[d].data(), mu, mu).transpose();
        form.q = Eigen::Map<const Eigen::VectorXd>(qp.q[d].data(), mu);
        form.A1 = Eigen::Map<const Eigen::MatrixXd>(qp.A1[d].data(), nt, m).transpose();
        form.A2 = Eigen::Map<const Eigen::MatrixXd>(qp.A2[d].data(), nt, m).transpose();
        form.A3 = Eigen::Map<const Eigen::MatrixXd>(qp.A3[d].data(), mu, m).transpose();
        form.b = Eigen::Map<const Eigen::VectorXd>(qp.b[d].data(), m);
        std::vector<double> pd(nt), td(nt);
        for (int i = 0; i < tau; ++i) {
          for (int t = 0; t < T; ++t) {
            pd[i * T + t] = p.at(k, d, i, t);
            td[i * T + t] = theta.at(k, d, i, t);
          }
        }
        cost[d] = qp_form_cost(form, pd, td, feas_tol);
      }
      break;
    }
  }
  return cost;
}

double total_cost(const Network& net, const ContingencySpec& spec,
                  const ScheduleTensor& p, const ScheduleTensor& theta,
                  double feas_tol) {
  double obj = 0.0;
  const int K1 = net.num_slices();
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const int g = static_cast<int>(gi);
    const int keff = net.k_eff(g);
    const double w = keff > 1 ? 1.0 / static_cast<double>(K1) : 1.0;
    for (int k = 0; k < keff; ++k) {
      const auto costs = group_cost(net, spec, g, k, p[gi], theta[gi], feas_tol);
      for (double c : costs) {
        if (!std::isfinite(c)) return kInf;
        obj += w * c;
      }
    }
  }
  return obj;
}

// --- ProxEngines / dispatch ---

ProxEngines::ProxEngines(const Network& net, const ContingencySpec& spec,
                         double rho_p, double rho_theta, double omega,
                         int inner_iters, bool warm_start)
    : net_(&net), rho_p_(rho_p), rho_theta_(rho_theta), omega_(omega),
      inner_iters_(inner_iters), warm_start_(warm_start) {
  if (inner_iters_ < 1 || inner_iters_ > 50) {
    throw std::invalid_argument("battery inner iterations must lie in [1, 50]");
  }
  engines_.resize(net.groups.size());
  sharing_.resize(net.groups.size());
  const int T = net.horizon;
  const int slices = net.num_slices();
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    if (g.kind != DeviceKind::battery && g.kind != DeviceKind::generic_qp) continue;
    const int keff = net.k_eff(static_cast<int>(gi));
    const double rp = effective_penalty(rho_p_, keff, slices);
    const double rt = effective_penalty(rho_theta_, keff, slices);
    auto& slot = engines_[gi];
    auto& share = sharing_[gi];
    slot.reserve(static_cast<size_t>(keff) * g.count);
    share.reserve(static_cast<size_t>(keff) * g.count);
    // Devices whose KKT blocks coincide share one cached factorization.
    std::map<std::vector<double>, std::pair<std::shared_ptr<const QpKktFactor>, size_t>> cache;
    for (int k = 0; k < keff; ++k) {
      const GroupParams params = params_for_slice(net, spec, static_cast<int>(gi), k);
      for (int d = 0; d < g.count; ++d) {
        QpDeviceForm form;
        std::vector<double> key;
        if (g.kind == DeviceKind::battery) {
          const auto& bp = std::get<BatteryParams>(params);
          form = battery_qp_form(bp.discharge_cost[d], bp.efficiency[d],
                                 bp.power_capacity[d], bp.duration[d], T);
          key = {bp.efficiency[d]};
        } else {
          const auto& qp = std::get<GenericQpParams>(params);
          const int mu = qp.num_locals, m = qp.num_inequalities;
          const int nt = g.terminals_per_device * T;
          form.tau = g.terminals_per_device;
          form.horizon = T;
          form.num_locals = mu;
          form.num_ineq = m;
          form.Q = Eigen::Map<const Eigen::MatrixXd>(qp.Q[d].data(), mu, mu).transpose();
          form.q = Eigen::Map<const Eigen::VectorXd>(qp.q[d].data(), mu);
          form.A1 = Eigen::Map<const Eigen::MatrixXd>(qp.A1[d].data(), nt, m).transpose();
          form.A2 = Eigen::Map<const Eigen::MatrixXd>(qp.A2[d].data(), nt, m).transpose();
          form.A3 = Eigen::Map<const Eigen::MatrixXd>(qp.A3[d].data(), mu, m).transpose();
          form.b = Eigen::Map<const Eigen::VectorXd>(qp.b[d].data(), m);
          key = qp.Q[d];
          key.insert(key.end(), qp.A1[d].begin(), qp.A1[d].end());
          key.insert(key.end(), qp.A2[d].begin(), qp.A2[d].end());
          key.insert(key.end(), qp.A3[d].begin(), qp.A3[d].end());
        }
        auto it = cache.find(key);
        std::shared_ptr<const QpKktFactor> factor;
        if (it == cache.end()) {
          factor = factorize_qp_kkt(form, rp, rt, omega_);
          cache.emplace(std::move(key), std::make_pair(factor, slot.size()));
          share.push_back(slot.size());
        } else {
          factor = it->second.first;
          share.push_back(it->second.second);
        }
        slot.push_back(std::make_unique<QpProxWorkspace>(form, rp, rt, omega_, factor));
      }
    }
  }
}

void ProxEngines::set_penalties(double rho_p, double rho_theta) {
  if (rho_p == rho_p_ && rho_theta == rho_theta_) return;
  rho_p_ = rho_p;
  rho_theta_ = rho_theta;
  const int slices = net_->num_slices();
  for (size_t gi = 0; gi < engines_.size(); ++gi) {
    if (engines_[gi].empty()) continue;
    const int keff = net_->k_eff(static_cast<int>(gi));
    const double rp = effective_penalty(rho_p_, keff, slices);
    const double rt = effective_penalty(rho_theta_, keff, slices);
    // Refactorize once per representative, then hand the factor to sharers.
    std::map<size_t, std::shared_ptr<const QpKktFactor>> rebuilt;
    for (size_t w = 0; w < engines_[gi].size(); ++w) {
      const size_t rep = sharing_[gi][w];
      auto it = rebuilt.find(rep);
      if (it == rebuilt.end()) {
        auto factor = factorize_qp_kkt(engines_[gi][rep]->form(), rp, rt, omega_);
        it = rebuilt.emplace(rep, std::move(factor)).first;
      }
      engines_[gi][w]->adopt_factor(it->second, rp, rt, omega_);
    }
  }
}

double ProxEngines::approx_local_cost(int gi) const {
  double c = 0.0;
  for (const auto& ws : engines_[gi]) c += ws->local_objective();
  return c;
}

QpProxWorkspace& ProxEngines::workspace(int gi, int k, int device) {
  const auto& g = net_->groups[gi];
  return *engines_[gi][static_cast<size_t>(k) * g.count + device];
}

std::vector<std::vector<GroupParams>> materialize_params(
    const Network& net, const ContingencySpec& spec) {
  std::vector<std::vector<GroupParams>> out(net.groups.size());
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const int keff = net.k_eff(static_cast<int>(gi));
    out[gi].reserve(keff);
    for (int k = 0; k < keff; ++k) {
      out[gi].push_back(params_for_slice(net, spec, static_cast<int>(gi), k));
    }
  }
  return out;
}

void dispatch_prox(const Network& net, const ContingencySpec& spec,
                   const std::vector<std::vector<GroupParams>>& slice_params,
                   int gi, const GroupTensor& target_p,
                   const GroupTensor& target_theta, double rho_p,
                   double rho_theta, GroupTensor& p_out, GroupTensor& theta_out,
                   ProxEngines* engines) {
  (void)spec;
  const auto& g = net.groups[gi];
  const int T = net.horizon;
  const int keff = target_p.k_eff;

  auto tp = [&](int k, int d, int i) {
    return std::span<const double>(&target_p.data[target_p.idx(k, d, i, 0)], T);
  };
  auto tth = [&](int k, int d, int i) {
    return std::span<const double>(&target_theta.data[target_theta.idx(k, d, i, 0)], T);
  };
  auto op = [&](int k, int d, int i) {
    return std::span<double>(&p_out.data[p_out.idx(k, d, i, 0)], T);
  };
  auto oth = [&](int k, int d, int i) {
    return std::span<double>(&theta_out.data[theta_out.idx(k, d, i, 0)], T);
  };
  auto pass_theta = [&](int k, int d) {
    auto src = tth(k, d, 0);
    auto dst = oth(k, d, 0);
    for (int t = 0; t < T; ++t) dst[t] = src[t];
  };

  for (int k = 0; k < keff; ++k) {
    const GroupParams& params = slice_params[gi][k];
    switch (g.kind) {
      case DeviceKind::generator: {
        const auto& gp = std::get<GeneratorParams>(params);
        for (int d = 0; d < g.count; ++d) {
          prox_generator(gp.quad_cost[d], gp.linear_cost[d],
                         std::span<const double>(&gp.p_min[d * T], T),
                         std::span<const double>(&gp.p_max[d * T], T),
                         tp(k, d, 0), rho_p, op(k, d, 0));
          pass_theta(k, d);
        }
        break;
      }
      case DeviceKind::fixed_load: {
        const auto& lp = std::get<FixedLoadParams>(params);
        for (int d = 0; d < g.count; ++d) {
          prox_fixed_load(std::span<const double>(&lp.p_load[d * T], T), op(k, d, 0));
          pass_theta(k, d);
        }
        break;
      }
      case DeviceKind::ac_line: {
        const auto& ap = std::get<AcLineParams>(params);
        for (int d = 0; d < g.count; ++d) {
          prox_ac_line(ap.capacity[d], ap.susceptance[d], tp(k, d, 0), tp(k, d, 1),
                       tth(k, d, 0), tth(k, d, 1), rho_p, rho_theta,
                       op(k, d, 0), op(k, d, 1), oth(k, d, 0), oth(k, d, 1));
        }
        break;
      }
      case DeviceKind::dc_line: {
        const auto& dp = std::get<DcLineParams>(params);
        for (int d = 0; d < g.count; ++d) {
          prox_dc_line(dp.capacity[d], tp(k, d, 0), tp(k, d, 1), op(k, d, 0),
                       op(k, d, 1));
          for (int i = 0; i < 2; ++i) {
            auto src = tth(k, d, i);
            auto dst = oth(k, d, i);
            for (int t = 0; t < T; ++t) dst[t] = src[t];
          }
        }
        break;
      }
      case DeviceKind::battery: {
        if (!engines) throw std::logic_error("battery prox requires engines");
        for (int d = 0; d < g.count; ++d) {
          auto& ws = engines->workspace(gi, k, d);
          if (!engines->warm_start()) ws.reset();
          prox_battery(ws, tp(k, d, 0), engines->inner_iters(), op(k, d, 0));
          pass_theta(k, d);
        }
        break;
      }
      case DeviceKind::generic_qp: {
        if (!engines) throw std::logic_error("generic_qp prox requires engines");
        const int tau = g.terminals_per_device;
        std::vector<double> xin(tau * T), yin(tau * T), pout(tau * T), thout(tau * T);
        for (int d = 0; d < g.count; ++d) {
          for (int i = 0; i < tau; ++i) {
            auto sp = tp(k, d, i);
            auto st = tth(k, d, i);
            for (int t = 0; t < T; ++t) {
              xin[i * T + t] = sp[t];
              yin[i * T + t] = st[t];
            }
          }
          auto& ws = engines->workspace(gi, k, d);
          if (!engines->warm_start()) ws.reset();
          ws.solve(xin, yin, engines->inner_iters(), pout, thout);
          for (int i = 0; i < tau; ++i) {
            auto dp = op(k, d, i);
            auto dt = oth(k, d, i);
            for (int t = 0; t < T; ++t) {
              dp[t] = pout[i * T + t];
              dt[t] = thout[i * T + t];
            }
          }
        }
        break;
      }
    }
  }
}

}  // namespace gridmp
