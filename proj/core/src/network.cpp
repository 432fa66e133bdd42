#include "gridmp/network.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gridmp {

const char* to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::generator: return "generator";
    case DeviceKind::fixed_load: return "fixed_load";
    case DeviceKind::ac_line: return "ac_line";
    case DeviceKind::dc_line: return "dc_line";
    case DeviceKind::battery: return "battery";
    case DeviceKind::generic_qp: return "generic_qp";
  }
  return "unknown";
}

std::optional<DeviceKind> device_kind_from_string(const std::string& name) {
  if (name == "generator") return DeviceKind::generator;
  if (name == "fixed_load") return DeviceKind::fixed_load;
  if (name == "ac_line") return DeviceKind::ac_line;
  if (name == "dc_line") return DeviceKind::dc_line;
  if (name == "battery") return DeviceKind::battery;
  if (name == "generic_qp") return DeviceKind::generic_qp;
  return std::nullopt;
}

int Network::num_terminals() const {
  int j = 0;
  for (const auto& g : groups) j += g.num_terminals();
  return j;
}

int Network::num_devices() const {
  int d = 0;
  for (const auto& g : groups) d += g.count;
  return d;
}

namespace {

int expected_terminals(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::generator:
    case DeviceKind::fixed_load:
    case DeviceKind::battery:
      return 1;
    case DeviceKind::ac_line:
    case DeviceKind::dc_line:
      return 2;
    case DeviceKind::generic_qp:
      return -1;  // any
  }
  return -1;
}

void check_len(std::vector<std::string>& errs, const std::string& where,
               const char* field, size_t got, size_t want) {
  if (got != want) {
    std::ostringstream os;
    os << where << ": parameter '" << field << "' has " << got
       << " entries, expected " << want;
    errs.push_back(os.str());
  }
}

void validate_params(std::vector<std::string>& errs, const DeviceGroup& g,
                     const GroupParams& params, int T, const std::string& where) {
  const size_t n = static_cast<size_t>(g.count);
  const size_t nT = n * static_cast<size_t>(T);
  switch (g.kind) {
    case DeviceKind::generator: {
      const auto* p = std::get_if<GeneratorParams>(&params);
      if (!p) { errs.push_back(where + ": params are not generator params"); return; }
      check_len(errs, where, "quad_cost", p->quad_cost.size(), n);
      check_len(errs, where, "linear_cost", p->linear_cost.size(), n);
      check_len(errs, where, "p_min", p->p_min.size(), nT);
      check_len(errs, where, "p_max", p->p_max.size(), nT);
      for (size_t d = 0; d < p->quad_cost.size(); ++d) {
        if (p->quad_cost[d] < 0.0) {
          errs.push_back(where + ": device " + std::to_string(d) +
                         " has negative quadratic cost");
        }
      }
      if (p->p_min.size() == nT && p->p_max.size() == nT) {
        for (size_t i = 0; i < nT; ++i) {
          if (p->p_min[i] > p->p_max[i]) {
            errs.push_back(where + ": p_min > p_max at flat index " +
                           std::to_string(i));
            break;
          }
        }
      }
      break;
    }
    case DeviceKind::fixed_load: {
      const auto* p = std::get_if<FixedLoadParams>(&params);
      if (!p) { errs.push_back(where + ": params are not fixed_load params"); return; }
      check_len(errs, where, "p_load", p->p_load.size(), nT);
      for (double v : p->p_load) {
        if (!std::isfinite(v)) {
          errs.push_back(where + ": non-finite p_load entry");
          break;
        }
      }
      break;
    }
    case DeviceKind::ac_line: {
      const auto* p = std::get_if<AcLineParams>(&params);
      if (!p) { errs.push_back(where + ": params are not ac_line params"); return; }
      check_len(errs, where, "capacity", p->capacity.size(), n);
      check_len(errs, where, "susceptance", p->susceptance.size(), n);
      for (size_t d = 0; d < p->capacity.size() && d < p->susceptance.size(); ++d) {
        if (p->capacity[d] < 0.0) {
          errs.push_back(where + ": device " + std::to_string(d) +
                         " has negative capacity");
        }
        // b == 0 together with u == 0 encodes an outaged line.
        if (p->susceptance[d] < 0.0 ||
            (p->susceptance[d] == 0.0 && p->capacity[d] != 0.0)) {
          errs.push_back(where + ": device " + std::to_string(d) +
                         " has invalid susceptance");
        }
      }
      break;
    }
    case DeviceKind::dc_line: {
      const auto* p = std::get_if<DcLineParams>(&params);
      if (!p) { errs.push_back(where + ": params are not dc_line params"); return; }
      check_len(errs, where, "capacity", p->capacity.size(), n);
      for (size_t d = 0; d < p->capacity.size(); ++d) {
        if (p->capacity[d] < 0.0) {
          errs.push_back(where + ": device " + std::to_string(d) +
                         " has negative capacity");
        }
      }
      break;
    }
    case DeviceKind::battery: {
      const auto* p = std::get_if<BatteryParams>(&params);
      if (!p) { errs.push_back(where + ": params are not battery params"); return; }
      check_len(errs, where, "discharge_cost", p->discharge_cost.size(), n);
      check_len(errs, where, "efficiency", p->efficiency.size(), n);
      check_len(errs, where, "power_capacity", p->power_capacity.size(), n);
      check_len(errs, where, "duration", p->duration.size(), n);
      for (size_t d = 0; d < p->efficiency.size(); ++d) {
        if (!(p->efficiency[d] > 0.0 && p->efficiency[d] <= 1.0)) {
          errs.push_back(where + ": device " + std::to_string(d) +
                         " has efficiency outside (0, 1]");
        }
      }
      for (size_t d = 0; d < p->power_capacity.size(); ++d) {
        if (p->power_capacity[d] < 0.0 ||
            (d < p->duration.size() && p->duration[d] < 0.0)) {
          errs.push_back(where + ": device " + std::to_string(d) +
                         " has negative power capacity or duration");
        }
      }
      break;
    }
    case DeviceKind::generic_qp: {
      const auto* p = std::get_if<GenericQpParams>(&params);
      if (!p) { errs.push_back(where + ": params are not generic_qp params"); return; }
      const size_t mu = static_cast<size_t>(p->num_locals);
      const size_t m = static_cast<size_t>(p->num_inequalities);
      const size_t tauT = static_cast<size_t>(g.terminals_per_device) * T;
      check_len(errs, where, "Q", p->Q.size(), n);
      check_len(errs, where, "q", p->q.size(), n);
      check_len(errs, where, "A1", p->A1.size(), n);
      check_len(errs, where, "A2", p->A2.size(), n);
      check_len(errs, where, "A3", p->A3.size(), n);
      check_len(errs, where, "b", p->b.size(), n);
      for (size_t d = 0; d < n && d < p->Q.size(); ++d) {
        if (p->Q[d].size() != mu * mu || p->q[d].size() != mu ||
            p->A1[d].size() != m * tauT || p->A2[d].size() != m * tauT ||
            p->A3[d].size() != m * mu || p->b[d].size() != m) {
          errs.push_back(where + ": device " + std::to_string(d) +
                         " has inconsistent QP block dimensions");
        }
      }
      break;
    }
  }
}

}  // namespace

std::vector<std::string> validate(const Network& net) {
  std::vector<std::string> errs;
  if (net.num_nodes <= 0) errs.push_back("network has no nodes");
  if (net.horizon <= 0) errs.push_back("horizon must be positive");

  std::vector<int> degree(std::max(net.num_nodes, 0), 0);
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const std::string where = "group " + std::to_string(gi) +
                              (g.name.empty() ? "" : " (" + g.name + ")");
    if (g.count < 0) errs.push_back(where + ": negative device count");
    if (g.terminals_per_device <= 0)
      errs.push_back(where + ": terminals_per_device must be positive");
    const int exp_tau = expected_terminals(g.kind);
    if (exp_tau > 0 && g.terminals_per_device != exp_tau) {
      errs.push_back(where + ": kind " + to_string(g.kind) + " requires " +
                     std::to_string(exp_tau) + " terminals per device, got " +
                     std::to_string(g.terminals_per_device));
    }
    if (static_cast<int>(g.terminal_node.size()) != g.num_terminals()) {
      errs.push_back(where + ": terminal_node has " +
                     std::to_string(g.terminal_node.size()) + " entries, expected " +
                     std::to_string(g.num_terminals()));
      continue;
    }
    for (int d = 0; d < g.count; ++d) {
      for (int i = 0; i < g.terminals_per_device; ++i) {
        const int n = g.node_of(d, i);
        if (n < 0 || n >= net.num_nodes) {
          errs.push_back(where + ": terminal (device " + std::to_string(d) +
                         ", slot " + std::to_string(i) +
                         ") maps to invalid node " + std::to_string(n));
        } else {
          degree[n]++;
        }
      }
    }
    validate_params(errs, g, g.params, net.horizon, where);
  }

  for (int n = 0; n < net.num_nodes; ++n) {
    if (degree[n] == 0) {
      errs.push_back("node " + std::to_string(n) +
                     " has no terminals (average undefined)");
    }
  }

  if (net.contingency_count > 0) {
    if (net.contingency_group < 0 ||
        net.contingency_group >= static_cast<int>(net.groups.size())) {
      errs.push_back("contingency_group " + std::to_string(net.contingency_group) +
                     " is not a valid group index");
    }
  } else if (net.contingency_group >= static_cast<int>(net.groups.size())) {
    errs.push_back("contingency_group out of range");
  }
  return errs;
}

std::vector<std::string> validate(const Network& net, const ContingencySpec& spec) {
  std::vector<std::string> errs = validate(net);
  if (spec.count() != net.contingency_count) {
    errs.push_back("contingency spec has " + std::to_string(spec.count()) +
                   " contingencies, network declares " +
                   std::to_string(net.contingency_count));
  }
  if (spec.count() == 0) return errs;
  if (spec.group != net.contingency_group) {
    errs.push_back("contingency spec group " + std::to_string(spec.group) +
                   " does not match network contingency_group " +
                   std::to_string(net.contingency_group));
    return errs;
  }
  if (spec.group < 0 || spec.group >= static_cast<int>(net.groups.size())) return errs;
  const auto& g = net.groups[spec.group];
  if (spec.is_n_minus_1) {
    if (g.kind != DeviceKind::ac_line) {
      errs.push_back("n-1 contingencies require an ac_line contingency group");
    }
    for (int d : spec.outages) {
      if (d < 0 || d >= g.count) {
        errs.push_back("outage device " + std::to_string(d) +
                       " outside contingency group");
      }
    }
  } else {
    for (size_t k = 0; k < spec.overrides.size(); ++k) {
      std::vector<std::string> sub;
      validate_params(sub, g, spec.overrides[k],  // same shape rules as the base table
                      net.horizon, "contingency " + std::to_string(k + 1));
      errs.insert(errs.end(), sub.begin(), sub.end());
    }
  }
  return errs;
}

ContingencySpec build_n_minus_1(const Network& net,
                                const std::vector<int>& outage_devices) {
  if (net.contingency_group < 0 ||
      net.contingency_group >= static_cast<int>(net.groups.size())) {
    throw std::invalid_argument("build_n_minus_1: network has no contingency group");
  }
  const auto& g = net.groups[net.contingency_group];
  if (g.kind != DeviceKind::ac_line) {
    throw std::invalid_argument(
        "build_n_minus_1: contingency group must be ac_line, got " +
        std::string(to_string(g.kind)));
  }
  for (int d : outage_devices) {
    if (d < 0 || d >= g.count) {
      throw std::invalid_argument("build_n_minus_1: device " + std::to_string(d) +
                                  " is outside the contingency group");
    }
  }
  ContingencySpec spec;
  spec.group = net.contingency_group;
  spec.is_n_minus_1 = true;
  spec.outages = outage_devices;
  return spec;
}

GroupParams params_for_slice(const Network& net, const ContingencySpec& spec,
                             int group, int k) {
  const auto& base = net.groups[group].params;
  if (k == 0 || group != spec.group || spec.count() == 0) return base;
  if (k < 1 || k > spec.count()) {
    throw std::out_of_range("params_for_slice: contingency index out of range");
  }
  if (spec.is_n_minus_1) {
    GroupParams out = base;
    auto& line = std::get<AcLineParams>(out);
    const int dev = spec.outages[k - 1];
    line.capacity[dev] = 0.0;
    line.susceptance[dev] = 0.0;
    return out;
  }
  return spec.overrides[k - 1];
}

std::vector<int> node_degree(const Network& net) {
  std::vector<int> degree(net.num_nodes, 0);
  for (const auto& g : net.groups) {
    for (int n : g.terminal_node) degree[n]++;
  }
  return degree;
}

}  // namespace gridmp
