#include "gridmp/sensitivity.hpp"

#include <cmath>
#include <stdexcept>

#include "gridmp/dense_qp.hpp"
#include "gridmp/tensor_ops.hpp"

namespace gridmp {

namespace {

bool analytic_kind(DeviceKind k) {
  return k == DeviceKind::generator || k == DeviceKind::fixed_load ||
         k == DeviceKind::ac_line || k == DeviceKind::dc_line;
}

bool kind_matches(DeviceKind kind, const ParameterSelector& sel) {
  return kind == sel.kind;
}

// Entries per device of a selector within one group.
int per_device_entries(const ParameterSelector& sel, int T) {
  return sel.per_period() ? T : 1;
}

struct StepOutcome {
  Residuals res;
  double fu = 1.0;
  double fv = 1.0;
};

// One forward step of the fixed-iteration run shared by the tape, replay,
// segment recomputation, and the finite-difference path: iterate, then the
// trailing penalty adaptation (never after the last iteration).
StepOutcome forward_step(SolverState& st, int it, int total_iters,
                         const Network& net, const ContingencySpec& spec,
                         const std::vector<std::vector<GroupParams>>& params,
                         const SolverConfig& cfg, ProxEngines& engines,
                         IterationRecord* rec) {
  StepOutcome out;
  out.res = iterate(st, net, spec, params, cfg, engines, rec);
  if (cfg.adaptive && it % cfg.adapt_every == 0 && it < total_iters) {
    std::tie(out.fu, out.fv) = adapt_penalties(st, out.res, cfg, engines);
  }
  if (rec) {
    rec->rescale_u = out.fu;
    rec->rescale_v = out.fv;
  }
  return out;
}

SolverState run_fixed(const Network& net, const ContingencySpec& spec,
                      const SolverConfig& cfg, int iters, const Solution* warm) {
  const auto params = materialize_params(net, spec);
  ProxEngines engines(net, spec, cfg.rho_p, cfg.rho_theta, cfg.omega,
                      cfg.battery_inner_iters, cfg.inner_warm_start);
  SolverState st = init_state(net, spec, warm);
  align_penalties(st, cfg.rho_p, cfg.rho_theta);
  for (int it = 1; it <= iters; ++it) {
    forward_step(st, it, iters, net, spec, params, cfg, engines, nullptr);
  }
  return st;
}

// Per-group per-slice parameter adjoints, flattened k-major.
struct GroupParamAdj {
  std::vector<double> gen_b;          // keff * count
  std::vector<double> gen_pmin;       // keff * count * T
  std::vector<double> gen_pmax;       // keff * count * T
  std::vector<double> load_pload;     // keff * count * T
  std::vector<double> line_cap;       // keff * count
};

std::vector<GroupParamAdj> make_param_adj(const Network& net) {
  std::vector<GroupParamAdj> out(net.groups.size());
  const int T = net.horizon;
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const int keff = net.k_eff(static_cast<int>(gi));
    switch (g.kind) {
      case DeviceKind::generator:
        out[gi].gen_b.assign(static_cast<size_t>(keff) * g.count, 0.0);
        out[gi].gen_pmin.assign(static_cast<size_t>(keff) * g.count * T, 0.0);
        out[gi].gen_pmax.assign(static_cast<size_t>(keff) * g.count * T, 0.0);
        break;
      case DeviceKind::fixed_load:
        out[gi].load_pload.assign(static_cast<size_t>(keff) * g.count * T, 0.0);
        break;
      case DeviceKind::ac_line:
      case DeviceKind::dc_line:
        out[gi].line_cap.assign(static_cast<size_t>(keff) * g.count, 0.0);
        break;
      default:
        break;
    }
  }
  return out;
}

// Reverse of one prox dispatch: consumes the output adjoints, emits target
// adjoints and parameter adjoints. Masks are recomputed from the recorded
// targets with the same expressions the forward pass used.
void prox_vjp_group(const Network& net, int gi,
                    const std::vector<GroupParams>& slice_params,
                    const GroupTensor& tp, const GroupTensor& tth,
                    double rho_p, double rho_theta, const GroupTensor& p_adj,
                    const GroupTensor& th_adj, GroupTensor& tp_adj,
                    GroupTensor& tth_adj, GroupParamAdj& padj) {
  const auto& g = net.groups[gi];
  const int T = net.horizon;
  const int keff = tp.k_eff;
  for (int k = 0; k < keff; ++k) {
    const GroupParams& params = slice_params[k];
    switch (g.kind) {
      case DeviceKind::generator: {
        const auto& gp = std::get<GeneratorParams>(params);
        for (int d = 0; d < g.count; ++d) {
          const double a = gp.quad_cost[d], b = gp.linear_cost[d];
          for (int t = 0; t < T; ++t) {
            const double seed = p_adj.at(k, d, 0, t);
            double xa = 0, ba = 0, loa = 0, hia = 0;
            prox_generator_vjp(a, b, gp.p_min[d * T + t], gp.p_max[d * T + t],
                               tp.at(k, d, 0, t), rho_p, seed, &xa, &ba, &loa,
                               &hia);
            tp_adj.at(k, d, 0, t) += xa;
            padj.gen_b[k * g.count + d] += ba;
            padj.gen_pmin[(k * g.count + d) * T + t] += loa;
            padj.gen_pmax[(k * g.count + d) * T + t] += hia;
            tth_adj.at(k, d, 0, t) += th_adj.at(k, d, 0, t);
          }
        }
        break;
      }
      case DeviceKind::fixed_load: {
        for (int d = 0; d < g.count; ++d) {
          for (int t = 0; t < T; ++t) {
            padj.load_pload[(k * g.count + d) * T + t] += p_adj.at(k, d, 0, t);
            tth_adj.at(k, d, 0, t) += th_adj.at(k, d, 0, t);
          }
        }
        break;
      }
      case DeviceKind::ac_line: {
        const auto& ap = std::get<AcLineParams>(params);
        for (int d = 0; d < g.count; ++d) {
          for (int t = 0; t < T; ++t) {
            AcLineVec seed{p_adj.at(k, d, 0, t), p_adj.at(k, d, 1, t),
                           th_adj.at(k, d, 0, t), th_adj.at(k, d, 1, t)};
            double x1a = 0, x2a = 0, y1a = 0, y2a = 0, ua = 0;
            prox_ac_line_vjp(ap.capacity[d], ap.susceptance[d],
                             tp.at(k, d, 0, t), tp.at(k, d, 1, t),
                             tth.at(k, d, 0, t), tth.at(k, d, 1, t), rho_p,
                             rho_theta, seed, &x1a, &x2a, &y1a, &y2a, &ua);
            tp_adj.at(k, d, 0, t) += x1a;
            tp_adj.at(k, d, 1, t) += x2a;
            tth_adj.at(k, d, 0, t) += y1a;
            tth_adj.at(k, d, 1, t) += y2a;
            padj.line_cap[k * g.count + d] += ua;
          }
        }
        break;
      }
      case DeviceKind::dc_line: {
        const auto& dp = std::get<DcLineParams>(params);
        for (int d = 0; d < g.count; ++d) {
          for (int t = 0; t < T; ++t) {
            double x1a = 0, x2a = 0, ua = 0;
            prox_dc_line_vjp(dp.capacity[d], tp.at(k, d, 0, t),
                             tp.at(k, d, 1, t), p_adj.at(k, d, 0, t),
                             p_adj.at(k, d, 1, t), &x1a, &x2a, &ua);
            tp_adj.at(k, d, 0, t) += x1a;
            tp_adj.at(k, d, 1, t) += x2a;
            padj.line_cap[k * g.count + d] += ua;
            tth_adj.at(k, d, 0, t) += th_adj.at(k, d, 0, t);
            tth_adj.at(k, d, 1, t) += th_adj.at(k, d, 1, t);
          }
        }
        break;
      }
      default:
        throw std::logic_error("prox_vjp_group: unsupported kind");
    }
  }
}

// Whether slice k of the contingency group overrides the base parameters of
// device d (the gradient to the base entry is cut there).
bool slice_overrides(const ContingencySpec& spec, int gi, int k, int d) {
  if (k == 0 || gi != spec.group || spec.count() == 0) return false;
  if (spec.is_n_minus_1) return spec.outages[k - 1] == d;
  return true;  // explicit overrides replace the whole table
}

}  // namespace

// --- ParameterSelector ---

bool ParameterSelector::per_period() const {
  return param == "p_max" || param == "p_min" || param == "p_load";
}

int ParameterSelector::size(const Network& net) const {
  int n = 0;
  for (const auto& g : net.groups) {
    if (kind_matches(g.kind, *this)) {
      n += g.count * per_device_entries(*this, net.horizon);
    }
  }
  return n;
}

std::vector<std::string> ParameterSelector::labels(const Network& net) const {
  std::vector<std::string> out;
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    if (!kind_matches(g.kind, *this)) continue;
    for (int d = 0; d < g.count; ++d) {
      if (per_period()) {
        for (int t = 0; t < net.horizon; ++t) {
          out.push_back(g.name + "/" + std::to_string(d) + "/t" + std::to_string(t));
        }
      } else {
        out.push_back(g.name + "/" + std::to_string(d));
      }
    }
  }
  return out;
}

ParameterSelector ParameterSelector::parse(const std::string& text) {
  const auto dot = text.find('.');
  if (dot == std::string::npos) {
    throw std::invalid_argument("selector must look like kind.param, got '" +
                                text + "'");
  }
  const auto kind = device_kind_from_string(text.substr(0, dot));
  if (!kind) {
    throw std::invalid_argument("unknown device kind in selector '" + text + "'");
  }
  ParameterSelector sel;
  sel.kind = *kind;
  sel.param = text.substr(dot + 1);
  static const std::map<DeviceKind, std::vector<std::string>> allowed = {
      {DeviceKind::generator, {"p_max", "p_min", "b"}},
      {DeviceKind::fixed_load, {"p_load"}},
      {DeviceKind::ac_line, {"capacity"}},
      {DeviceKind::dc_line, {"capacity"}},
  };
  const auto it = allowed.find(sel.kind);
  if (it == allowed.end() ||
      std::find(it->second.begin(), it->second.end(), sel.param) ==
          it->second.end()) {
    throw std::invalid_argument("unsupported selector '" + text + "'");
  }
  return sel;
}

std::string ParameterSelector::to_string() const {
  return std::string(gridmp::to_string(kind)) + "." + param;
}

std::vector<double> get_params(const Network& net, const ParameterSelector& wrt) {
  std::vector<double> out;
  const int T = net.horizon;
  for (const auto& g : net.groups) {
    if (!kind_matches(g.kind, wrt)) continue;
    if (g.kind == DeviceKind::generator) {
      const auto& p = std::get<GeneratorParams>(g.params);
      if (wrt.param == "p_max") out.insert(out.end(), p.p_max.begin(), p.p_max.end());
      else if (wrt.param == "p_min") out.insert(out.end(), p.p_min.begin(), p.p_min.end());
      else out.insert(out.end(), p.linear_cost.begin(), p.linear_cost.end());
    } else if (g.kind == DeviceKind::fixed_load) {
      const auto& p = std::get<FixedLoadParams>(g.params);
      out.insert(out.end(), p.p_load.begin(), p.p_load.end());
    } else if (g.kind == DeviceKind::ac_line) {
      const auto& p = std::get<AcLineParams>(g.params);
      out.insert(out.end(), p.capacity.begin(), p.capacity.end());
    } else if (g.kind == DeviceKind::dc_line) {
      const auto& p = std::get<DcLineParams>(g.params);
      out.insert(out.end(), p.capacity.begin(), p.capacity.end());
    }
    (void)T;
  }
  return out;
}

void set_params(Network& net, const ParameterSelector& wrt,
                const std::vector<double>& values) {
  size_t pos = 0;
  for (auto& g : net.groups) {
    if (!kind_matches(g.kind, wrt)) continue;
    auto take = [&](std::vector<double>& dst) {
      if (pos + dst.size() > values.size()) {
        throw std::invalid_argument("set_params: value vector too short");
      }
      std::copy(values.begin() + pos, values.begin() + pos + dst.size(), dst.begin());
      pos += dst.size();
    };
    if (g.kind == DeviceKind::generator) {
      auto& p = std::get<GeneratorParams>(g.params);
      if (wrt.param == "p_max") take(p.p_max);
      else if (wrt.param == "p_min") take(p.p_min);
      else take(p.linear_cost);
    } else if (g.kind == DeviceKind::fixed_load) {
      take(std::get<FixedLoadParams>(g.params).p_load);
    } else if (g.kind == DeviceKind::ac_line) {
      take(std::get<AcLineParams>(g.params).capacity);
    } else if (g.kind == DeviceKind::dc_line) {
      take(std::get<DcLineParams>(g.params).capacity);
    }
  }
  if (pos != values.size()) {
    throw std::invalid_argument("set_params: value vector size mismatch");
  }
}

// --- Tape ---

Tape solve_with_tape(const Network& net, const ContingencySpec& spec,
                     const SolverConfig& config, int iters, const Solution* warm,
                     int checkpoint_every) {
  config.check();
  if (iters < 0) throw std::invalid_argument("solve_with_tape: iters must be >= 0");
  if (checkpoint_every < 1) {
    throw std::invalid_argument("solve_with_tape: checkpoint interval must be >= 1");
  }
  for (const auto& g : net.groups) {
    if (!analytic_kind(g.kind)) {
      throw std::invalid_argument(
          std::string("solve_with_tape: device kind '") + to_string(g.kind) +
          "' has no piecewise-smooth analytic prox; use grad_fd");
    }
  }
  const auto params = materialize_params(net, spec);
  ProxEngines engines(net, spec, config.rho_p, config.rho_theta, config.omega,
                      config.battery_inner_iters, config.inner_warm_start);

  Tape tape;
  tape.config = config;
  tape.iterations = iters;
  tape.checkpoint_every = checkpoint_every;
  SolverState st = init_state(net, spec, warm);
  align_penalties(st, config.rho_p, config.rho_theta);
  tape.rho_p_per_iter.reserve(iters);
  for (int it = 1; it <= iters; ++it) {
    if ((it - 1) % checkpoint_every == 0) tape.checkpoints.push_back(st);
    tape.rho_p_per_iter.push_back(st.rho_p);
    tape.rho_theta_per_iter.push_back(st.rho_theta);
    const auto out = forward_step(st, it, iters, net, spec, params, config,
                                  engines, nullptr);
    tape.rescale_u_per_iter.push_back(out.fu);
    tape.rescale_v_per_iter.push_back(out.fv);
  }
  if (iters == 0) tape.checkpoints.push_back(st);
  tape.final_state = std::move(st);
  return tape;
}

SolverState replay(const Tape& tape, const Network& net,
                   const ContingencySpec& spec) {
  const auto params = materialize_params(net, spec);
  ProxEngines engines(net, spec, tape.checkpoints.front().rho_p,
                      tape.checkpoints.front().rho_theta, tape.config.omega,
                      tape.config.battery_inner_iters,
                      tape.config.inner_warm_start);
  SolverState st = tape.checkpoints.front();
  for (int it = 1; it <= tape.iterations; ++it) {
    forward_step(st, it, tape.iterations, net, spec, params, tape.config,
                 engines, nullptr);
  }
  return st;
}

// --- Objective ---

namespace {

double battery_elastic_cost(const BatteryParams& bp, int d, int T,
                            std::span<const double> p) {
  // min alpha*sum(dis) + M*sum(w) over (c, dis, soc, w+, w-) subject to
  // dis - c + w+ - w- = p, the charge dynamics, and the box limits.
  const double elastic_price = 1e5;
  const int nv = 3 * T + 1 + 2 * T;
  const int c0 = 0, d0 = T, s0 = 2 * T, wp0 = 3 * T + 1, wm0 = 4 * T + 1;
  DenseQp qp;
  qp.P = Eigen::MatrixXd::Zero(nv, nv);
  qp.c = Eigen::VectorXd::Zero(nv);
  for (int t = 0; t < T; ++t) {
    qp.c[d0 + t] = bp.discharge_cost[d];
    qp.c[wp0 + t] = elastic_price;
    qp.c[wm0 + t] = elastic_price;
  }
  const int me = 2 * T + 2;
  qp.A = Eigen::MatrixXd::Zero(me, nv);
  qp.b = Eigen::VectorXd::Zero(me);
  int row = 0;
  for (int t = 0; t < T; ++t, ++row) {
    qp.A(row, d0 + t) = 1.0;
    qp.A(row, c0 + t) = -1.0;
    qp.A(row, wp0 + t) = 1.0;
    qp.A(row, wm0 + t) = -1.0;
    qp.b(row) = p[t];
  }
  for (int t = 0; t < T; ++t, ++row) {
    qp.A(row, s0 + t + 1) = 1.0;
    qp.A(row, s0 + t) = -1.0;
    qp.A(row, c0 + t) = -bp.efficiency[d];
    qp.A(row, d0 + t) = 1.0;
  }
  qp.A(row++, s0) = 1.0;
  qp.A(row++, s0 + T) = 1.0;
  const int mi = 6 * T + 2 + 2 * T;
  qp.G = Eigen::MatrixXd::Zero(mi, nv);
  qp.h = Eigen::VectorXd::Zero(mi);
  int ir = 0;
  for (int t = 0; t < T; ++t) {
    qp.G(ir, c0 + t) = 1.0; qp.h(ir++) = bp.power_capacity[d];
    qp.G(ir++, c0 + t) = -1.0;
    qp.G(ir, d0 + t) = 1.0; qp.h(ir++) = bp.power_capacity[d];
    qp.G(ir++, d0 + t) = -1.0;
  }
  for (int t = 0; t <= T; ++t) {
    qp.G(ir, s0 + t) = 1.0; qp.h(ir++) = bp.duration[d] * bp.power_capacity[d];
    qp.G(ir++, s0 + t) = -1.0;
  }
  for (int t = 0; t < T; ++t) {
    qp.G(ir++, wp0 + t) = -1.0;
    qp.G(ir++, wm0 + t) = -1.0;
  }
  const QpResult r = solve_dense_qp(qp, 1e-9, 100);
  return r.objective;
}

}  // namespace

double unrolled_objective(const Network& net, const ContingencySpec& spec,
                          const ScheduleTensor& p, const ScheduleTensor& theta) {
  (void)theta;
  const int T = net.horizon;
  const int K1 = net.num_slices();
  double obj = 0.0;
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const int keff = net.k_eff(static_cast<int>(gi));
    const double w = keff > 1 ? 1.0 / static_cast<double>(K1) : 1.0;
    for (int k = 0; k < keff; ++k) {
      const GroupParams params = params_for_slice(net, spec, static_cast<int>(gi), k);
      switch (g.kind) {
        case DeviceKind::generator: {
          const auto& gp = std::get<GeneratorParams>(params);
          for (int d = 0; d < g.count; ++d) {
            for (int t = 0; t < T; ++t) {
              const double pv = p[gi].at(k, d, 0, t);
              obj += w * (gp.quad_cost[d] * pv * pv + gp.linear_cost[d] * pv);
            }
          }
          break;
        }
        case DeviceKind::battery: {
          const auto& bp = std::get<BatteryParams>(params);
          std::vector<double> pd(T);
          for (int d = 0; d < g.count; ++d) {
            for (int t = 0; t < T; ++t) pd[t] = p[gi].at(k, d, 0, t);
            obj += w * battery_elastic_cost(bp, d, T, pd);
          }
          break;
        }
        default:
          break;  // indicator-only kinds (and generic QP handled by grad_fd
                  // callers through total_cost when needed)
      }
    }
  }
  return obj;
}

// --- Reverse traversal ---

std::vector<double> grad(const Tape& tape, const Network& net,
                         const ContingencySpec& spec,
                         const ParameterSelector& wrt) {
  const int T = net.horizon;
  const int K1 = net.num_slices();
  const auto slice_params = materialize_params(net, spec);
  const std::vector<int> degree = node_degree(net);

  // Running adjoints of the state entering each iteration (from behind).
  ScheduleTensor z_adj = make_schedule(net, true);
  ScheduleTensor v_adj = make_schedule(net, true);
  NodeTensor xi_adj(K1, net.num_nodes, T);
  NodeTensor u_adj(K1, net.num_nodes, T);
  auto padj = make_param_adj(net);

  // Objective seed on the final iterate: d obj / d p for generator groups
  // plus the direct linear-cost term.
  ScheduleTensor p_seed = make_schedule(net);
  const ScheduleTensor th_seed = make_schedule(net);
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    if (g.kind != DeviceKind::generator) continue;
    const int keff = net.k_eff(static_cast<int>(gi));
    const double w = keff > 1 ? 1.0 / static_cast<double>(K1) : 1.0;
    for (int k = 0; k < keff; ++k) {
      const auto& gp = std::get<GeneratorParams>(slice_params[gi][k]);
      for (int d = 0; d < g.count; ++d) {
        for (int t = 0; t < T; ++t) {
          const double pv = tape.final_state.p[gi].at(k, d, 0, t);
          p_seed[gi].at(k, d, 0, t) =
              w * (2.0 * gp.quad_cost[d] * pv + gp.linear_cost[d]);
          padj[gi].gen_b[k * g.count + d] += w * pv;
        }
      }
    }
  }

  const int C = tape.checkpoint_every;
  const int num_segments =
      tape.iterations == 0 ? 0 : (tape.iterations + C - 1) / C;

  std::vector<IterationRecord> recs;
  for (int seg = num_segments - 1; seg >= 0; --seg) {
    const int first = seg * C + 1;
    const int last = std::min(tape.iterations, (seg + 1) * C);

    // Recompute this segment forward, capturing the per-iteration records.
    SolverState st = tape.checkpoints[seg];
    recs.assign(last - first + 1, IterationRecord{});
    {
      ProxEngines engines(net, spec, st.rho_p, st.rho_theta, tape.config.omega,
                          tape.config.battery_inner_iters,
                          tape.config.inner_warm_start);
      for (int it = first; it <= last; ++it) {
        forward_step(st, it, tape.iterations, net, spec, slice_params,
                     tape.config, engines, &recs[it - first]);
      }
    }

    for (int it = last; it >= first; --it) {
      const IterationRecord& rec = recs[it - first];
      const bool is_final = (it == tape.iterations);

      // Post-iteration dual rescaling (recorded constants).
      if (rec.rescale_u != 1.0) {
        for (double& x : u_adj.data) x *= rec.rescale_u;
      }
      if (rec.rescale_v != 1.0) {
        for (auto& g : v_adj) {
          for (double& x : g.data) x *= rec.rescale_v;
        }
      }

      const double alpha = rec.alpha;
      NodeTensor pbar_adj(K1, net.num_nodes, T);
      NodeTensor thbar_adj(K1, net.num_nodes, T);
      ScheduleTensor presid_adj = make_schedule(net, true);
      ScheduleTensor thresid_adj = make_schedule(net, true);
      ScheduleTensor p_adj = make_schedule(net);
      ScheduleTensor th_adj = make_schedule(net);
      if (is_final) {
        p_adj = p_seed;
        th_adj = th_seed;
      }

      // Price updates: u' = u + alpha*pbar, v' = v + alpha*thresid.
      for (size_t i = 0; i < u_adj.data.size(); ++i) {
        pbar_adj.data[i] += alpha * u_adj.data[i];
      }
      for (size_t gi = 0; gi < net.groups.size(); ++gi) {
        for (size_t i = 0; i < v_adj[gi].data.size(); ++i) {
          thresid_adj[gi].data[i] += alpha * v_adj[gi].data[i];
        }
      }

      // Duplicate updates: z' = alpha*presid + (1-alpha) z and the
      // node-level xi analogue.
      for (size_t gi = 0; gi < net.groups.size(); ++gi) {
        for (size_t i = 0; i < z_adj[gi].data.size(); ++i) {
          presid_adj[gi].data[i] += alpha * z_adj[gi].data[i];
          z_adj[gi].data[i] *= (1.0 - alpha);
        }
      }
      for (size_t i = 0; i < xi_adj.data.size(); ++i) {
        thbar_adj.data[i] += alpha * xi_adj.data[i];
        xi_adj.data[i] *= (1.0 - alpha);
      }

      // presid = p (broadcast) - gather(pbar): collapse slices onto the
      // group tensors and push the gathered part into the node adjoints.
      for (size_t gi = 0; gi < net.groups.size(); ++gi) {
        const auto& g = net.groups[gi];
        const int keff = p_adj[gi].k_eff;
        for (int k = 0; k < K1; ++k) {
          const int ks = keff == 1 ? 0 : k;
          for (int d = 0; d < g.count; ++d) {
            for (int i = 0; i < g.terminals_per_device; ++i) {
              for (int t = 0; t < T; ++t) {
                p_adj[gi].at(ks, d, i, t) += presid_adj[gi].at(k, d, i, t);
                th_adj[gi].at(ks, d, i, t) += thresid_adj[gi].at(k, d, i, t);
              }
            }
          }
        }
      }
      {
        const NodeTensor sp = scatter_sum(presid_adj, net, K1);
        const NodeTensor sth = scatter_sum(thresid_adj, net, K1);
        for (size_t i = 0; i < pbar_adj.data.size(); ++i) {
          pbar_adj.data[i] -= sp.data[i];
          thbar_adj.data[i] -= sth.data[i];
        }
      }

      // pbar = avg(p): spread node adjoints back to terminals / degree.
      for (size_t gi = 0; gi < net.groups.size(); ++gi) {
        const auto& g = net.groups[gi];
        const int keff = p_adj[gi].k_eff;
        for (int k = 0; k < K1; ++k) {
          const int ks = keff == 1 ? 0 : k;
          for (int d = 0; d < g.count; ++d) {
            for (int i = 0; i < g.terminals_per_device; ++i) {
              const int n = g.node_of(d, i);
              const double inv = 1.0 / degree[n];
              for (int t = 0; t < T; ++t) {
                p_adj[gi].at(ks, d, i, t) += inv * pbar_adj.at(k, n, t);
                th_adj[gi].at(ks, d, i, t) += inv * thbar_adj.at(k, n, t);
              }
            }
          }
        }
      }

      // Prox reverse, then target adjoints flow into (z, u, xi, v).
      for (size_t gi = 0; gi < net.groups.size(); ++gi) {
        const int g = static_cast<int>(gi);
        const int keff = net.k_eff(g);
        const double rp = effective_penalty(rec.rho_p, keff, K1);
        const double rt = effective_penalty(rec.rho_theta, keff, K1);
        GroupTensor tp_adj(rec.target_p[gi].k_eff, rec.target_p[gi].count,
                           rec.target_p[gi].tau, T);
        GroupTensor tth_adj = tp_adj;
        prox_vjp_group(net, g, slice_params[gi], rec.target_p[gi],
                       rec.target_theta[gi], rp, rt, p_adj[gi], th_adj[gi],
                       tp_adj, tth_adj, padj[gi]);

        // Shared groups: the forward target was the contingency mean.
        const double spread = keff == K1 ? 1.0 : 1.0 / static_cast<double>(K1);
        auto& zg = z_adj[gi];
        auto& vg = v_adj[gi];
        const auto& grp = net.groups[gi];
        for (int k = 0; k < K1; ++k) {
          const int ks = tp_adj.k_eff == 1 ? 0 : k;
          for (int d = 0; d < grp.count; ++d) {
            for (int i = 0; i < grp.terminals_per_device; ++i) {
              const int n = grp.node_of(d, i);
              for (int t = 0; t < T; ++t) {
                const double ap = spread * tp_adj.at(ks, d, i, t);
                const double ath = spread * tth_adj.at(ks, d, i, t);
                zg.at(k, d, i, t) += ap;
                u_adj.at(k, n, t) -= ap;
                xi_adj.at(k, n, t) += ath;
                vg.at(k, d, i, t) -= ath;
              }
            }
          }
        }
      }
    }
  }

  // Collapse per-slice parameter adjoints onto the base entries and read
  // out the selector.
  std::vector<double> out;
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    if (!kind_matches(g.kind, wrt)) continue;
    const int keff = net.k_eff(static_cast<int>(gi));
    const int per_dev = per_device_entries(wrt, T);
    const std::vector<double>* src = nullptr;
    if (g.kind == DeviceKind::generator) {
      src = wrt.param == "p_max" ? &padj[gi].gen_pmax
            : wrt.param == "p_min" ? &padj[gi].gen_pmin
                                   : &padj[gi].gen_b;
    } else if (g.kind == DeviceKind::fixed_load) {
      src = &padj[gi].load_pload;
    } else {
      src = &padj[gi].line_cap;
    }
    for (int d = 0; d < g.count; ++d) {
      for (int e = 0; e < per_dev; ++e) {
        double sum = 0.0;
        for (int k = 0; k < keff; ++k) {
          if (slice_overrides(spec, static_cast<int>(gi), k, d)) continue;
          sum += (*src)[(static_cast<size_t>(k) * g.count + d) * per_dev + e];
        }
        out.push_back(sum);
      }
    }
  }
  return out;
}

std::vector<double> grad_fd(const Network& net, const ContingencySpec& spec,
                            const SolverConfig& config, int iters,
                            const ParameterSelector& wrt, double h,
                            const Solution* warm) {
  if (!(h > 0)) throw std::invalid_argument("grad_fd: h must be positive");
  const std::vector<double> base = get_params(net, wrt);
  std::vector<double> out(base.size());
  for (size_t i = 0; i < base.size(); ++i) {
    const double hi = h * std::max(1.0, std::abs(base[i]));
    double vals[2];
    int side = 0;
    for (const double sgn : {+1.0, -1.0}) {
      Network pert = net;
      std::vector<double> v = base;
      v[i] += sgn * hi;
      set_params(pert, wrt, v);
      const SolverState st = run_fixed(pert, spec, config, iters, warm);
      vals[side++] = unrolled_objective(pert, spec, st.p, st.theta);
    }
    out[i] = (vals[0] - vals[1]) / (2.0 * hi);
  }
  return out;
}

// --- Scalar prox direction/adjoint maps ---

double prox_generator_jvp(double a, double b, double lo, double hi, double x,
                          double rho, double dx, double db, double dlo,
                          double dhi) {
  const double w = (rho * x - b) / (2.0 * a + rho);
  if (w < lo) return dlo;
  if (w > hi) return dhi;
  return (rho * dx - db) / (2.0 * a + rho);
}

void prox_generator_vjp(double a, double b, double lo, double hi, double x,
                        double rho, double p_adj, double* x_adj, double* b_adj,
                        double* lo_adj, double* hi_adj) {
  const double w = (rho * x - b) / (2.0 * a + rho);
  if (w < lo) {
    *lo_adj += p_adj;
  } else if (w > hi) {
    *hi_adj += p_adj;
  } else {
    *x_adj += p_adj * rho / (2.0 * a + rho);
    *b_adj -= p_adj / (2.0 * a + rho);
  }
}

namespace {
// Pre-clamp flow of the AC line prox and its clamp state.
struct AcFlow {
  double g = 0.0;
  int mask = 0;  // -1 low, 0 free, +1 high
};
AcFlow ac_flow(double u, double b, double x1, double x2, double y1, double y2,
               double rho_p, double rho_theta) {
  AcFlow f;
  const double denom = 2.0 * rho_p + rho_theta / (2.0 * b * b);
  f.g = (rho_p * (x2 - x1) + rho_theta * (y1 - y2) / (2.0 * b)) / denom;
  if (f.g < -u) f.mask = -1;
  else if (f.g > u) f.mask = +1;
  return f;
}
}  // namespace

AcLineVec prox_ac_line_jvp(double u, double b, double x1, double x2, double y1,
                           double y2, double rho_p, double rho_theta,
                           double dx1, double dx2, double dy1, double dy2,
                           double du) {
  AcLineVec out;
  if (b == 0.0) {  // outaged line: zero flow, phases pass through
    out.th1 = dy1;
    out.th2 = dy2;
    return out;
  }
  const AcFlow f = ac_flow(u, b, x1, x2, y1, y2, rho_p, rho_theta);
  double df;
  if (f.mask == 0) {
    const double denom = 2.0 * rho_p + rho_theta / (2.0 * b * b);
    df = (rho_p * (dx2 - dx1) + rho_theta * (dy1 - dy2) / (2.0 * b)) / denom;
  } else {
    df = f.mask > 0 ? du : -du;
  }
  const double dh = 0.5 * (dy1 + dy2);
  out.p1 = -df;
  out.p2 = df;
  out.th1 = dh + df / (2.0 * b);
  out.th2 = dh - df / (2.0 * b);
  return out;
}

void prox_ac_line_vjp(double u, double b, double x1, double x2, double y1,
                      double y2, double rho_p, double rho_theta,
                      const AcLineVec& seed, double* x1_adj, double* x2_adj,
                      double* y1_adj, double* y2_adj, double* u_adj) {
  if (b == 0.0) {
    *y1_adj += seed.th1;
    *y2_adj += seed.th2;
    return;
  }
  const AcFlow f = ac_flow(u, b, x1, x2, y1, y2, rho_p, rho_theta);
  const double f_adj = -seed.p1 + seed.p2 + (seed.th1 - seed.th2) / (2.0 * b);
  const double h_adj = seed.th1 + seed.th2;
  *y1_adj += 0.5 * h_adj;
  *y2_adj += 0.5 * h_adj;
  if (f.mask == 0) {
    const double denom = 2.0 * rho_p + rho_theta / (2.0 * b * b);
    const double e_adj = f_adj / denom;
    *x1_adj -= e_adj * rho_p;
    *x2_adj += e_adj * rho_p;
    *y1_adj += e_adj * rho_theta / (2.0 * b);
    *y2_adj -= e_adj * rho_theta / (2.0 * b);
  } else {
    *u_adj += f.mask > 0 ? f_adj : -f_adj;
  }
}

void prox_dc_line_jvp(double u, double x1, double x2, double dx1, double dx2,
                      double du, double* dp1, double* dp2) {
  const double g = 0.5 * (x2 - x1);
  double df;
  if (g < -u) df = -du;
  else if (g > u) df = du;
  else df = 0.5 * (dx2 - dx1);
  *dp1 = -df;
  *dp2 = df;
}

void prox_dc_line_vjp(double u, double x1, double x2, double p1_adj,
                      double p2_adj, double* x1_adj, double* x2_adj,
                      double* u_adj) {
  const double g = 0.5 * (x2 - x1);
  const double f_adj = -p1_adj + p2_adj;
  if (g < -u) {
    *u_adj -= f_adj;
  } else if (g > u) {
    *u_adj += f_adj;
  } else {
    *x1_adj -= 0.5 * f_adj;
    *x2_adj += 0.5 * f_adj;
  }
}

}  // namespace gridmp
