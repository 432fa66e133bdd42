#include "gridmp/casegen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gridmp {

namespace {

// Draws are built from raw mt19937_64 words so that generated cases are
// identical across standard library implementations.
struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform() {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(uniform() * n) % n;
  }
};

constexpr double kPi = 3.14159265358979323846;

}  // namespace

Case generate_case(const CaseGenOptions& opt) {
  if (opt.nodes < 1) throw std::invalid_argument("gen-case: nodes must be >= 1");
  if (opt.horizon < 1) throw std::invalid_argument("gen-case: horizon must be >= 1");
  const int N = opt.nodes;
  const int T = opt.horizon;
  Rng rng(opt.seed);

  const auto scaled = [&](double per500) {
    return std::max(0, static_cast<int>(std::lround(per500 * N / 500.0)));
  };
  const int n_gens = std::max(1, scaled(1392));
  const int n_ac = std::max(N - 1, scaled(1143));
  const int n_dc = scaled(3);
  const int n_batt = scaled(74);

  // Per-node base loads and sinusoidal daily profiles.
  std::vector<double> base(N), phase(N);
  for (int n = 0; n < N; ++n) {
    base[n] = rng.uniform(50.0, 150.0);
    phase[n] = rng.uniform(0.0, 2.0 * kPi);
  }
  const double total_base = std::accumulate(base.begin(), base.end(), 0.0);
  const double node_scale = total_base / N;

  Case c;
  c.name = "synthetic-n" + std::to_string(N) + "-t" + std::to_string(T) + "-k" +
           std::to_string(opt.contingencies) + "-s" + std::to_string(opt.seed);
  c.net.num_nodes = N;
  c.net.horizon = T;

  // Curtailable loads: one generator-kind device per node with injection in
  // [-load, 0] and a 500 $/MWh price on every unserved MWh.
  {
    DeviceGroup g;
    g.kind = DeviceKind::generator;
    g.name = "loads";
    g.count = N;
    g.terminals_per_device = 1;
    GeneratorParams p;
    for (int n = 0; n < N; ++n) {
      g.terminal_node.push_back(n);
      p.quad_cost.push_back(0.0);
      p.linear_cost.push_back(500.0);
      for (int t = 0; t < T; ++t) {
        const double prof = 1.0 + 0.25 * std::sin(2.0 * kPi * t / T + phase[n]);
        const double load = opt.load_scale * base[n] * prof;
        p.p_min.push_back(-load);
        p.p_max.push_back(0.0);
      }
    }
    g.params = std::move(p);
    c.net.groups.push_back(std::move(g));
  }

  // Generators: capacities rescaled so the fleet covers the unscaled base
  // load with margin; a case is dispatchable without curtailment up to
  // roughly 70% load scale.
  {
    DeviceGroup g;
    g.kind = DeviceKind::generator;
    g.name = "generators";
    g.count = n_gens;
    g.terminals_per_device = 1;
    GeneratorParams p;
    std::vector<double> caps(n_gens);
    double cap_sum = 0.0;
    for (int d = 0; d < n_gens; ++d) {
      caps[d] = rng.uniform(30.0, 100.0);
      cap_sum += caps[d];
    }
    const double cap_scale = 1.15 * total_base / cap_sum;
    for (int d = 0; d < n_gens; ++d) {
      g.terminal_node.push_back(d < N ? d : rng.uniform_int(N));
      p.quad_cost.push_back(rng.uniform(0.002, 0.02));
      p.linear_cost.push_back(rng.uniform(15.0, 80.0));
      const double cap = caps[d] * cap_scale;
      for (int t = 0; t < T; ++t) {
        p.p_min.push_back(0.0);
        p.p_max.push_back(cap);
      }
    }
    g.params = std::move(p);
    c.net.groups.push_back(std::move(g));
  }

  // AC lines: a random spanning tree plus random extra corridors. The
  // susceptance is sized for ~0.1 rad at full flow.
  int ac_group = -1;
  {
    DeviceGroup g;
    g.kind = DeviceKind::ac_line;
    g.name = "ac_lines";
    g.count = n_ac;
    g.terminals_per_device = 2;
    AcLineParams p;
    for (int d = 0; d < n_ac; ++d) {
      int a, b;
      if (d < N - 1) {
        b = d + 1;
        a = rng.uniform_int(d + 1);
      } else {
        a = rng.uniform_int(N);
        b = rng.uniform_int(N);
        if (N > 1) {
          while (b == a) b = rng.uniform_int(N);
        }
      }
      g.terminal_node.push_back(a);
      g.terminal_node.push_back(b);
      const double cap = rng.uniform(1.5, 3.0) * node_scale;
      p.capacity.push_back(cap);
      p.susceptance.push_back(10.0 * cap);
    }
    g.params = std::move(p);
    ac_group = static_cast<int>(c.net.groups.size());
    c.net.groups.push_back(std::move(g));
  }

  if (n_dc > 0) {
    DeviceGroup g;
    g.kind = DeviceKind::dc_line;
    g.name = "dc_lines";
    g.count = n_dc;
    g.terminals_per_device = 2;
    DcLineParams p;
    for (int d = 0; d < n_dc; ++d) {
      const int a = rng.uniform_int(N);
      int b = rng.uniform_int(N);
      if (N > 1) {
        while (b == a) b = rng.uniform_int(N);
      }
      g.terminal_node.push_back(a);
      g.terminal_node.push_back(b);
      p.capacity.push_back(rng.uniform(0.5, 1.0) * node_scale);
    }
    g.params = std::move(p);
    c.net.groups.push_back(std::move(g));
  }

  if (n_batt > 0) {
    DeviceGroup g;
    g.kind = DeviceKind::battery;
    g.name = "batteries";
    g.count = n_batt;
    g.terminals_per_device = 1;
    BatteryParams p;
    const double effs[3] = {0.85, 0.90, 0.95};
    for (int d = 0; d < n_batt; ++d) {
      g.terminal_node.push_back(rng.uniform_int(N));
      p.discharge_cost.push_back(rng.uniform(0.5, 5.0));
      p.efficiency.push_back(effs[rng.uniform_int(3)]);
      p.power_capacity.push_back(rng.uniform(0.1, 0.3) * node_scale);
      p.duration.push_back(rng.uniform() < 0.5 ? 2.0 : 4.0);
    }
    g.params = std::move(p);
    c.net.groups.push_back(std::move(g));
  }

  if (opt.contingencies > 0) {
    if (opt.contingencies > n_ac) {
      throw std::invalid_argument("gen-case: more contingencies than AC lines");
    }
    std::vector<int> lines(n_ac);
    std::iota(lines.begin(), lines.end(), 0);
    // Deterministic partial shuffle picking the outaged lines.
    for (int i = 0; i < opt.contingencies; ++i) {
      const int j = i + rng.uniform_int(n_ac - i);
      std::swap(lines[i], lines[j]);
    }
    lines.resize(opt.contingencies);
    std::sort(lines.begin(), lines.end());
    c.net.contingency_group = ac_group;
    c.spec = build_n_minus_1(c.net, lines);
    c.net.contingency_count = c.spec.count();
  }
  return c;
}

}  // namespace gridmp
