#pragma once

// Shared test fixtures: the three-bus example network, random networks for
// property tests, and a tiny deterministic RNG wrapper.

#include <cmath>
#include <random>
#include <vector>

#include "gridmp/network.hpp"
#include "gridmp/tensor.hpp"
#include "gridmp/tensor_ops.hpp"

namespace gridmp::testing {

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    // Box-Muller from two uniforms; deterministic across platforms.
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  int uniform_int(int n) { return static_cast<int>(uniform() * n) % n; }
};

// Three-bus system: 2 loads, 2 generators, 3 AC lines, 1 battery;
// 11 terminals, 3 nodes, 8 devices.
inline Network three_bus_network(int T = 2) {
  Network net;
  net.num_nodes = 3;
  net.horizon = T;

  DeviceGroup loads;
  loads.kind = DeviceKind::fixed_load;
  loads.name = "loads";
  loads.count = 2;
  loads.terminals_per_device = 1;
  loads.terminal_node = {0, 2};
  FixedLoadParams lp;
  lp.p_load.assign(2 * T, -30.0);
  loads.params = lp;

  DeviceGroup gens;
  gens.kind = DeviceKind::generator;
  gens.name = "generators";
  gens.count = 2;
  gens.terminals_per_device = 1;
  gens.terminal_node = {0, 1};
  GeneratorParams gp;
  gp.quad_cost = {0.01, 0.02};
  gp.linear_cost = {10.0, 25.0};
  gp.p_min.assign(2 * T, 0.0);
  gp.p_max.assign(2 * T, 100.0);
  gens.params = gp;

  DeviceGroup lines;
  lines.kind = DeviceKind::ac_line;
  lines.name = "ac_lines";
  lines.count = 3;
  lines.terminals_per_device = 2;
  // T1: n0-n2, T2: n0-n1, T3: n1-n2.
  lines.terminal_node = {0, 2, 0, 1, 1, 2};
  AcLineParams ap;
  ap.capacity = {40.0, 40.0, 40.0};
  ap.susceptance = {400.0, 400.0, 400.0};
  lines.params = ap;

  DeviceGroup batt;
  batt.kind = DeviceKind::battery;
  batt.name = "batteries";
  batt.count = 1;
  batt.terminals_per_device = 1;
  batt.terminal_node = {2};
  BatteryParams bp;
  bp.discharge_cost = {1.0};
  bp.efficiency = {0.9};
  bp.power_capacity = {10.0};
  bp.duration = {2.0};
  batt.params = bp;

  net.groups = {loads, gens, lines, batt};
  return net;
}

// Random connected structure exercising every analytic kind; parameters are
// valid but arbitrary. Node coverage is guaranteed by pinning the first
// single-terminal group to nodes 0..N-1 cyclically.
inline Network random_network(Rng& rng, int max_nodes = 20, int T = 2) {
  Network net;
  net.num_nodes = 2 + rng.uniform_int(max_nodes - 1);
  net.horizon = T;
  const int N = net.num_nodes;

  DeviceGroup gens;
  gens.kind = DeviceKind::generator;
  gens.name = "generators";
  gens.count = N + rng.uniform_int(6);
  gens.terminals_per_device = 1;
  GeneratorParams gp;
  for (int d = 0; d < gens.count; ++d) {
    gens.terminal_node.push_back(d < N ? d : rng.uniform_int(N));
    gp.quad_cost.push_back(rng.uniform(0.0, 0.05));
    gp.linear_cost.push_back(rng.uniform(5.0, 50.0));
    for (int t = 0; t < T; ++t) {
      gp.p_min.push_back(0.0);
      gp.p_max.push_back(rng.uniform(20.0, 80.0));
    }
  }
  gens.params = gp;
  net.groups.push_back(gens);

  DeviceGroup loads;
  loads.kind = DeviceKind::fixed_load;
  loads.name = "loads";
  loads.count = 1 + rng.uniform_int(N);
  loads.terminals_per_device = 1;
  FixedLoadParams lp;
  for (int d = 0; d < loads.count; ++d) {
    loads.terminal_node.push_back(rng.uniform_int(N));
    for (int t = 0; t < T; ++t) lp.p_load.push_back(-rng.uniform(5.0, 30.0));
  }
  loads.params = lp;
  net.groups.push_back(loads);

  if (N >= 2) {
    DeviceGroup lines;
    lines.kind = DeviceKind::ac_line;
    lines.name = "ac_lines";
    lines.count = (N - 1) + rng.uniform_int(4);
    lines.terminals_per_device = 2;
    AcLineParams ap;
    for (int d = 0; d < lines.count; ++d) {
      int a, b;
      if (d < N - 1) {
        b = d + 1;
        a = rng.uniform_int(d + 1);
      } else {
        a = rng.uniform_int(N);
        b = rng.uniform_int(N);
        while (b == a) b = rng.uniform_int(N);
      }
      lines.terminal_node.push_back(a);
      lines.terminal_node.push_back(b);
      const double cap = rng.uniform(20.0, 60.0);
      ap.capacity.push_back(cap);
      ap.susceptance.push_back(rng.uniform(5.0, 15.0) * cap);
    }
    lines.params = ap;
    net.groups.push_back(lines);
  }

  if (N >= 2 && rng.uniform() < 0.5) {
    DeviceGroup dc;
    dc.kind = DeviceKind::dc_line;
    dc.name = "dc_lines";
    dc.count = 1;
    dc.terminals_per_device = 2;
    const int a = rng.uniform_int(N);
    int b = rng.uniform_int(N);
    while (b == a) b = rng.uniform_int(N);
    dc.terminal_node = {a, b};
    DcLineParams dp;
    dp.capacity = {rng.uniform(10.0, 40.0)};
    dc.params = dp;
    net.groups.push_back(dc);
  }
  return net;
}

inline void fill_random(ScheduleTensor& x, Rng& rng, double scale = 1.0) {
  for (auto& g : x) {
    for (double& v : g.data) v = scale * rng.normal();
  }
}

inline void fill_random(NodeTensor& x, Rng& rng, double scale = 1.0) {
  for (double& v : x.data) v = scale * rng.normal();
}

}  // namespace gridmp::testing
