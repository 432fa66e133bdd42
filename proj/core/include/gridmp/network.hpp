#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gridmp {

/// Built-in device kinds plus a generic quadratic-program kind so users can
/// add devices without new code.
enum class DeviceKind {
  generator,
  fixed_load,
  ac_line,
  dc_line,
  battery,
  generic_qp,
};

const char* to_string(DeviceKind kind);
std::optional<DeviceKind> device_kind_from_string(const std::string& name);

/// Parameter tables are struct-of-arrays over the devices of a group.
/// Per-period bounds are stored row-major as count x T.
struct GeneratorParams {
  std::vector<double> quad_cost;    // a, $/MW^2 h, per device
  std::vector<double> linear_cost;  // b, $/MWh, per device
  std::vector<double> p_min;        // count x T, MW
  std::vector<double> p_max;        // count x T, MW
};

struct FixedLoadParams {
  std::vector<double> p_load;  // count x T, MW (injection; consumption < 0)
};

struct AcLineParams {
  std::vector<double> capacity;     // u, MW, per device
  std::vector<double> susceptance;  // b, MW/rad, per device
};

struct DcLineParams {
  std::vector<double> capacity;  // u, MW, per device
};

struct BatteryParams {
  std::vector<double> discharge_cost;  // alpha, $/MWh
  std::vector<double> efficiency;      // beta in (0, 1]
  std::vector<double> power_capacity;  // P, MW
  std::vector<double> duration;        // lambda, h (energy = lambda * P)
};

/// One quadratic program per device in the form
///   f(p, theta) = min_s  s'Qs + q's  s.t.  A1 p + A2 theta + A3 s <= b,
/// with p, theta flattened as tau*T vectors (terminal-major, time-minor).
struct GenericQpParams {
  int num_locals = 0;       // mu
  int num_inequalities = 0; // m
  // Per device, row-major blocks:
  std::vector<std::vector<double>> Q;   // mu x mu
  std::vector<std::vector<double>> q;   // mu
  std::vector<std::vector<double>> A1;  // m x (tau*T)
  std::vector<std::vector<double>> A2;  // m x (tau*T)
  std::vector<std::vector<double>> A3;  // m x mu
  std::vector<std::vector<double>> b;   // m
};

using GroupParams = std::variant<GeneratorParams, FixedLoadParams, AcLineParams,
                                 DcLineParams, BatteryParams, GenericQpParams>;

/// A homogeneous batch of devices sharing one cost template and terminal
/// count. Terminals are addressed as (device, slot); terminal_node maps
/// slot-major positions (d * terminals_per_device + i) to node indices.
struct DeviceGroup {
  DeviceKind kind = DeviceKind::generator;
  std::string name;
  int count = 0;
  int terminals_per_device = 1;
  std::vector<int> terminal_node;  // count * terminals_per_device
  GroupParams params;

  int node_of(int device, int slot) const {
    return terminal_node[device * terminals_per_device + slot];
  }
  int num_terminals() const { return count * terminals_per_device; }
};

/// Immutable device-node topology. Terminals are partitioned by devices and
/// by nodes; groups collect devices of one kind for batched evaluation.
struct Network {
  int num_nodes = 0;
  int horizon = 1;  // T
  std::vector<DeviceGroup> groups;
  int contingency_count = 0;   // K
  int contingency_group = -1;  // group whose parameters vary per contingency; -1 iff K == 0

  int num_terminals() const;
  int num_devices() const;
  /// K+1 slices for the contingency group's tensors, 1 for the rest.
  int k_eff(int group) const {
    return (group == contingency_group && contingency_count > 0)
               ? contingency_count + 1
               : 1;
  }
  int num_slices() const { return contingency_count + 1; }
};

/// Per-contingency parameter overrides for the contingency group.
/// The n-1 form zeroes one device's capacity/susceptance per contingency;
/// the explicit form carries a full parameter table per contingency.
struct ContingencySpec {
  int group = -1;
  std::vector<int> outages;                  // n-1 form: device index per contingency
  std::vector<GroupParams> overrides;        // explicit form: params per contingency
  bool is_n_minus_1 = false;

  int count() const {
    return is_n_minus_1 ? static_cast<int>(outages.size())
                        : static_cast<int>(overrides.size());
  }
  static ContingencySpec none() { return {}; }
};

/// Parameters of group `g` as seen in contingency slice k (k = 0 is the base
/// case). Materializes the override for the contingency group, returns the
/// base table otherwise.
GroupParams params_for_slice(const Network& net, const ContingencySpec& spec,
                             int group, int k);

/// Structural validation; returns one message per violation (empty = valid).
std::vector<std::string> validate(const Network& net);
std::vector<std::string> validate(const Network& net, const ContingencySpec& spec);

/// Builds the n-1 contingency spec outaging the given devices of the
/// contingency group (must be AC lines). Throws std::invalid_argument on a
/// device outside the group or a non-line group.
ContingencySpec build_n_minus_1(const Network& net,
                                const std::vector<int>& outage_devices);

/// Number of terminals attached to each node.
std::vector<int> node_degree(const Network& net);

}  // namespace gridmp
