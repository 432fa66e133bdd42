#include "gridmp/caseio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace gridmp {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<double> to_vector(const ordered_json& j) {
  return j.get<std::vector<double>>();
}

// count x T tables are stored as nested arrays [[T]...].
ordered_json nested(const std::vector<double>& flat, int count, int T) {
  ordered_json out = ordered_json::array();
  for (int d = 0; d < count; ++d) {
    ordered_json row = ordered_json::array();
    for (int t = 0; t < T; ++t) row.push_back(flat[d * T + t]);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<double> flatten(const ordered_json& j, const char* field) {
  std::vector<double> out;
  if (!j.is_array()) throw std::runtime_error(std::string("case: ") + field + " must be an array");
  for (const auto& row : j) {
    if (row.is_array()) {
      for (const auto& v : row) out.push_back(v.get<double>());
    } else {
      out.push_back(row.get<double>());
    }
  }
  return out;
}

ordered_json params_to_json(const DeviceGroup& g, const GroupParams& params, int T) {
  ordered_json out;
  switch (g.kind) {
    case DeviceKind::generator: {
      const auto& p = std::get<GeneratorParams>(params);
      out["a"] = p.quad_cost;
      out["b"] = p.linear_cost;
      out["p_min"] = nested(p.p_min, g.count, T);
      out["p_max"] = nested(p.p_max, g.count, T);
      break;
    }
    case DeviceKind::fixed_load: {
      const auto& p = std::get<FixedLoadParams>(params);
      out["p_load"] = nested(p.p_load, g.count, T);
      break;
    }
    case DeviceKind::ac_line: {
      const auto& p = std::get<AcLineParams>(params);
      out["capacity"] = p.capacity;
      out["susceptance"] = p.susceptance;
      break;
    }
    case DeviceKind::dc_line: {
      const auto& p = std::get<DcLineParams>(params);
      out["capacity"] = p.capacity;
      break;
    }
    case DeviceKind::battery: {
      const auto& p = std::get<BatteryParams>(params);
      out["discharge_cost"] = p.discharge_cost;
      out["efficiency"] = p.efficiency;
      out["power_capacity"] = p.power_capacity;
      out["duration"] = p.duration;
      break;
    }
    case DeviceKind::generic_qp: {
      const auto& p = std::get<GenericQpParams>(params);
      out["mu"] = p.num_locals;
      out["m"] = p.num_inequalities;
      out["Q"] = p.Q;
      out["q"] = p.q;
      out["A1"] = p.A1;
      out["A2"] = p.A2;
      out["A3"] = p.A3;
      out["b"] = p.b;
      break;
    }
  }
  return out;
}

GroupParams params_from_json(DeviceKind kind, const ordered_json& j) {
  switch (kind) {
    case DeviceKind::generator: {
      GeneratorParams p;
      p.quad_cost = to_vector(j.at("a"));
      p.linear_cost = to_vector(j.at("b"));
      p.p_min = flatten(j.at("p_min"), "p_min");
      p.p_max = flatten(j.at("p_max"), "p_max");
      return p;
    }
    case DeviceKind::fixed_load: {
      FixedLoadParams p;
      p.p_load = flatten(j.at("p_load"), "p_load");
      return p;
    }
    case DeviceKind::ac_line: {
      AcLineParams p;
      p.capacity = to_vector(j.at("capacity"));
      p.susceptance = to_vector(j.at("susceptance"));
      return p;
    }
    case DeviceKind::dc_line: {
      DcLineParams p;
      p.capacity = to_vector(j.at("capacity"));
      return p;
    }
    case DeviceKind::battery: {
      BatteryParams p;
      p.discharge_cost = to_vector(j.at("discharge_cost"));
      p.efficiency = to_vector(j.at("efficiency"));
      p.power_capacity = to_vector(j.at("power_capacity"));
      p.duration = to_vector(j.at("duration"));
      return p;
    }
    case DeviceKind::generic_qp: {
      GenericQpParams p;
      p.num_locals = j.at("mu").get<int>();
      p.num_inequalities = j.at("m").get<int>();
      p.Q = j.at("Q").get<std::vector<std::vector<double>>>();
      p.q = j.at("q").get<std::vector<std::vector<double>>>();
      p.A1 = j.at("A1").get<std::vector<std::vector<double>>>();
      p.A2 = j.at("A2").get<std::vector<std::vector<double>>>();
      p.A3 = j.at("A3").get<std::vector<std::vector<double>>>();
      p.b = j.at("b").get<std::vector<std::vector<double>>>();
      return p;
    }
  }
  throw std::runtime_error("case: unknown device kind");
}

ordered_json group_tensor_to_json(const GroupTensor& x) {
  ordered_json ks = ordered_json::array();
  for (int k = 0; k < x.k_eff; ++k) {
    ordered_json ds = ordered_json::array();
    for (int d = 0; d < x.count; ++d) {
      ordered_json is = ordered_json::array();
      for (int i = 0; i < x.tau; ++i) {
        ordered_json ts = ordered_json::array();
        for (int t = 0; t < x.horizon; ++t) ts.push_back(x.at(k, d, i, t));
        is.push_back(std::move(ts));
      }
      ds.push_back(std::move(is));
    }
    ks.push_back(std::move(ds));
  }
  return ks;
}

void group_tensor_from_json(const ordered_json& j, GroupTensor& x) {
  for (int k = 0; k < x.k_eff; ++k) {
    for (int d = 0; d < x.count; ++d) {
      for (int i = 0; i < x.tau; ++i) {
        for (int t = 0; t < x.horizon; ++t) {
          x.at(k, d, i, t) = j.at(k).at(d).at(i).at(t).get<double>();
        }
      }
    }
  }
}

ordered_json node_tensor_to_json(const NodeTensor& x) {
  ordered_json ks = ordered_json::array();
  for (int k = 0; k < x.k_eff; ++k) {
    ordered_json ns = ordered_json::array();
    for (int n = 0; n < x.nodes; ++n) {
      ordered_json ts = ordered_json::array();
      for (int t = 0; t < x.horizon; ++t) ts.push_back(x.at(k, n, t));
      ns.push_back(std::move(ts));
    }
    ks.push_back(std::move(ns));
  }
  return ks;
}

void node_tensor_from_json(const ordered_json& j, NodeTensor& x) {
  for (int k = 0; k < x.k_eff; ++k) {
    for (int n = 0; n < x.nodes; ++n) {
      for (int t = 0; t < x.horizon; ++t) {
        x.at(k, n, t) = j.at(k).at(n).at(t).get<double>();
      }
    }
  }
}

// Shortest round-trip representation, matching the JSON output.
std::string format_double(double v) {
  return ordered_json(v).dump();
}

}  // namespace

std::string case_to_json(const Case& c) {
  const int T = c.net.horizon;
  ordered_json j;
  j["version"] = 1;
  j["name"] = c.name;
  j["nodes"] = c.net.num_nodes;
  j["horizon"] = T;
  ordered_json groups = ordered_json::array();
  for (const auto& g : c.net.groups) {
    ordered_json gj;
    gj["kind"] = to_string(g.kind);
    gj["name"] = g.name;
    ordered_json terms = ordered_json::array();
    for (int d = 0; d < g.count; ++d) {
      ordered_json slots = ordered_json::array();
      for (int i = 0; i < g.terminals_per_device; ++i) slots.push_back(g.node_of(d, i));
      terms.push_back(std::move(slots));
    }
    gj["terminals"] = std::move(terms);
    gj["params"] = params_to_json(g, g.params, T);
    groups.push_back(std::move(gj));
  }
  j["groups"] = std::move(groups);

  ordered_json cj;
  if (c.spec.count() == 0) {
    cj["mode"] = "none";
  } else if (c.spec.is_n_minus_1) {
    cj["mode"] = "n_minus_1";
    cj["group"] = c.spec.group;
    cj["devices"] = c.spec.outages;
  } else {
    cj["mode"] = "explicit";
    cj["group"] = c.spec.group;
    ordered_json ov = ordered_json::array();
    for (const auto& o : c.spec.overrides) {
      ov.push_back(params_to_json(c.net.groups[c.spec.group], o, T));
    }
    cj["overrides"] = std::move(ov);
  }
  j["contingencies"] = std::move(cj);
  return j.dump(2) + "\n";
}

Case case_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("case: JSON parse error: ") + e.what());
  }
  Case c;
  c.name = j.value("name", "");
  c.net.num_nodes = j.at("nodes").get<int>();
  c.net.horizon = j.at("horizon").get<int>();
  for (const auto& gj : j.at("groups")) {
    DeviceGroup g;
    const auto kind = device_kind_from_string(gj.at("kind").get<std::string>());
    if (!kind) {
      throw std::runtime_error("case: unknown device kind '" +
                               gj.at("kind").get<std::string>() + "'");
    }
    g.kind = *kind;
    g.name = gj.value("name", "");
    const auto& terms = gj.at("terminals");
    g.count = static_cast<int>(terms.size());
    g.terminals_per_device = g.count > 0 ? static_cast<int>(terms.at(0).size()) : 1;
    for (const auto& slots : terms) {
      if (static_cast<int>(slots.size()) != g.terminals_per_device) {
        throw std::runtime_error("case: ragged terminal lists in group " + g.name);
      }
      for (const auto& n : slots) g.terminal_node.push_back(n.get<int>());
    }
    g.params = params_from_json(g.kind, gj.at("params"));
    c.net.groups.push_back(std::move(g));
  }

  const auto& cj = j.at("contingencies");
  const std::string mode = cj.at("mode").get<std::string>();
  if (mode == "none") {
    c.spec = ContingencySpec::none();
    c.net.contingency_count = 0;
    c.net.contingency_group = -1;
  } else if (mode == "n_minus_1") {
    c.spec.is_n_minus_1 = true;
    c.spec.group = cj.at("group").get<int>();
    c.spec.outages = cj.at("devices").get<std::vector<int>>();
    c.net.contingency_group = c.spec.group;
    c.net.contingency_count = c.spec.count();
  } else if (mode == "explicit") {
    c.spec.is_n_minus_1 = false;
    c.spec.group = cj.at("group").get<int>();
    if (c.spec.group < 0 || c.spec.group >= static_cast<int>(c.net.groups.size())) {
      throw std::runtime_error("case: contingency group out of range");
    }
    for (const auto& o : cj.at("overrides")) {
      c.spec.overrides.push_back(
          params_from_json(c.net.groups[c.spec.group].kind, o));
    }
    c.net.contingency_group = c.spec.group;
    c.net.contingency_count = c.spec.count();
  } else {
    throw std::runtime_error("case: unknown contingency mode '" + mode + "'");
  }

  const auto errs = validate(c.net, c.spec);
  if (!errs.empty()) {
    std::ostringstream os;
    os << "case validation failed:";
    for (const auto& e : errs) os << "\n  " << e;
    throw std::runtime_error(os.str());
  }
  return c;
}

Case load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open case file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return case_from_json(ss.str());
}

void save_case(const Case& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write case file " + path.string());
  out << case_to_json(c);
}

std::string solution_to_json(const Case& c, const Solution& sol) {
  ordered_json j;
  j["version"] = 1;
  j["case"] = c.name;
  j["status"] = to_string(sol.status);
  j["iterations"] = sol.iterations;
  j["objective"] = sol.objective;
  j["objective_exact"] = sol.objective_exact;
  j["residuals"] = {{"primal_p", sol.final_residuals.primal_p},
                    {"primal_theta", sol.final_residuals.primal_theta},
                    {"dual_p", sol.final_residuals.dual_p},
                    {"dual_theta", sol.final_residuals.dual_theta}};
  j["rho_p"] = sol.rho_p;
  j["rho_theta"] = sol.rho_theta;
  if (!sol.message.empty()) j["message"] = sol.message;
  j["prices"] = node_tensor_to_json(sol.prices);
  ordered_json sched = ordered_json::array();
  for (size_t gi = 0; gi < c.net.groups.size(); ++gi) {
    ordered_json gj;
    gj["name"] = c.net.groups[gi].name;
    gj["p"] = group_tensor_to_json(sol.p[gi]);
    gj["theta"] = group_tensor_to_json(sol.theta[gi]);
    sched.push_back(std::move(gj));
  }
  j["schedules"] = std::move(sched);
  ordered_json duals;
  duals["u"] = node_tensor_to_json(sol.u);
  ordered_json vs = ordered_json::array();
  for (const auto& vg : sol.v) vs.push_back(group_tensor_to_json(vg));
  duals["v"] = std::move(vs);
  j["duals"] = std::move(duals);
  return j.dump(2) + "\n";
}

Solution solution_from_json(const Case& c, const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  Solution sol;
  sol.iterations = j.value("iterations", 0);
  sol.objective = j.value("objective", 0.0);
  sol.objective_exact = j.value("objective_exact", true);
  sol.rho_p = j.value("rho_p", 1.0);
  sol.rho_theta = j.value("rho_theta", 1.0);
  const std::string st = j.value("status", "max_iter");
  sol.status = st == "converged" ? SolveStatus::converged
               : st == "diverged" ? SolveStatus::diverged
                                  : SolveStatus::max_iter;
  if (j.contains("residuals")) {
    const auto& r = j.at("residuals");
    sol.final_residuals.primal_p = r.value("primal_p", 0.0);
    sol.final_residuals.primal_theta = r.value("primal_theta", 0.0);
    sol.final_residuals.dual_p = r.value("dual_p", 0.0);
    sol.final_residuals.dual_theta = r.value("dual_theta", 0.0);
  }

  const int K1 = c.net.num_slices();
  sol.p = make_schedule(c.net);
  sol.theta = make_schedule(c.net);
  const auto& sched = j.at("schedules");
  for (size_t gi = 0; gi < c.net.groups.size(); ++gi) {
    group_tensor_from_json(sched.at(gi).at("p"), sol.p[gi]);
    group_tensor_from_json(sched.at(gi).at("theta"), sol.theta[gi]);
  }
  sol.prices = NodeTensor(K1, c.net.num_nodes, c.net.horizon);
  node_tensor_from_json(j.at("prices"), sol.prices);
  sol.u = NodeTensor(K1, c.net.num_nodes, c.net.horizon);
  sol.v = make_schedule(c.net, /*varying=*/true);
  if (j.contains("duals")) {
    node_tensor_from_json(j.at("duals").at("u"), sol.u);
    for (size_t gi = 0; gi < sol.v.size(); ++gi) {
      group_tensor_from_json(j.at("duals").at("v").at(gi), sol.v[gi]);
    }
  }
  return sol;
}

void save_solution(const Case& c, const Solution& sol,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write solution file " + path.string());
  out << solution_to_json(c, sol);
}

Solution load_solution(const Case& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open solution file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return solution_from_json(c, ss.str());
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::string out =
      "iter,r_primal_p,r_primal_theta,r_dual_p,r_dual_theta,rho_p,rho_theta,objective\n";
  for (const auto& row : trace) {
    out += std::to_string(row.iter);
    out += ',';
    out += format_double(row.res.primal_p);
    out += ',';
    out += format_double(row.res.primal_theta);
    out += ',';
    out += format_double(row.res.dual_p);
    out += ',';
    out += format_double(row.res.dual_theta);
    out += ',';
    out += format_double(row.rho_p);
    out += ',';
    out += format_double(row.rho_theta);
    out += ',';
    out += format_double(row.objective);
    out += '\n';
  }
  return out;
}

void save_trace(const std::vector<TraceRow>& trace,
                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file " + path.string());
  out << trace_to_csv(trace);
}

}  // namespace gridmp
