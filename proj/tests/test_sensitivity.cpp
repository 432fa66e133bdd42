#include "doctest.h"

#include <cmath>

#include "gridmp/casegen.hpp"
#include "gridmp/oracle.hpp"
#include "gridmp/sensitivity.hpp"
#include "support/fixtures.hpp"

using namespace gridmp;
using gridmp::testing::Rng;

namespace {

// Two generators and a fixed load on one bus; the cheap generator's
// capacity binds, so d(cost)/d(p_max_cheap) = b_cheap - b_expensive.
Network binding_toy() {
  Network net;
  net.num_nodes = 1;
  net.horizon = 1;
  DeviceGroup gens;
  gens.kind = DeviceKind::generator;
  gens.name = "gens";
  gens.count = 2;
  gens.terminals_per_device = 1;
  gens.terminal_node = {0, 0};
  GeneratorParams gp;
  gp.quad_cost = {0.0, 0.0};
  gp.linear_cost = {1.0, 3.0};
  gp.p_min = {0.0, 0.0};
  gp.p_max = {6.0, 10.0};
  gens.params = gp;
  DeviceGroup ld;
  ld.kind = DeviceKind::fixed_load;
  ld.name = "load";
  ld.count = 1;
  ld.terminals_per_device = 1;
  ld.terminal_node = {0};
  FixedLoadParams lp;
  lp.p_load = {-10.0};
  ld.params = lp;
  net.groups = {gens, ld};
  return net;
}

}  // namespace

TEST_CASE("scalar prox adjoints satisfy the dot-product identity") {
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    SUBCASE("") {}
    // Generator.
    {
      const double a = rng.uniform(0.0, 2.0), b = rng.uniform(-5.0, 5.0);
      const double lo = rng.uniform(-10.0, 0.0), hi = lo + rng.uniform(0.5, 20.0);
      const double x = rng.uniform(-20.0, 20.0), rho = rng.uniform(0.2, 5.0);
      const double dx = rng.normal(), db = rng.normal(), dlo = rng.normal(),
                   dhi = rng.normal();
      const double seed = rng.normal();
      const double jvp = prox_generator_jvp(a, b, lo, hi, x, rho, dx, db, dlo, dhi);
      double xa = 0, ba = 0, loa = 0, hia = 0;
      prox_generator_vjp(a, b, lo, hi, x, rho, seed, &xa, &ba, &loa, &hia);
      const double lhs = jvp * seed;
      const double rhs = dx * xa + db * ba + dlo * loa + dhi * hia;
      CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
    }
    // AC line.
    {
      const double u = rng.uniform(0.2, 10.0), b = rng.uniform(0.3, 20.0);
      const double rp = rng.uniform(0.2, 4.0), rt = rng.uniform(0.2, 4.0);
      const double x1 = rng.uniform(-15.0, 15.0), x2 = rng.uniform(-15.0, 15.0);
      const double y1 = rng.uniform(-2.0, 2.0), y2 = rng.uniform(-2.0, 2.0);
      const double dx1 = rng.normal(), dx2 = rng.normal(), dy1 = rng.normal(),
                   dy2 = rng.normal(), du = rng.normal();
      const AcLineVec seed{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
      const AcLineVec jvp =
          prox_ac_line_jvp(u, b, x1, x2, y1, y2, rp, rt, dx1, dx2, dy1, dy2, du);
      double x1a = 0, x2a = 0, y1a = 0, y2a = 0, ua = 0;
      prox_ac_line_vjp(u, b, x1, x2, y1, y2, rp, rt, seed, &x1a, &x2a, &y1a,
                       &y2a, &ua);
      const double lhs = jvp.p1 * seed.p1 + jvp.p2 * seed.p2 +
                         jvp.th1 * seed.th1 + jvp.th2 * seed.th2;
      const double rhs = dx1 * x1a + dx2 * x2a + dy1 * y1a + dy2 * y2a + du * ua;
      CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
    }
    // DC line.
    {
      const double u = rng.uniform(0.2, 10.0);
      const double x1 = rng.uniform(-15.0, 15.0), x2 = rng.uniform(-15.0, 15.0);
      const double dx1 = rng.normal(), dx2 = rng.normal(), du = rng.normal();
      double dp1, dp2;
      prox_dc_line_jvp(u, x1, x2, dx1, dx2, du, &dp1, &dp2);
      const double s1 = rng.normal(), s2 = rng.normal();
      double x1a = 0, x2a = 0, ua = 0;
      prox_dc_line_vjp(u, x1, x2, s1, s2, &x1a, &x2a, &ua);
      const double lhs = dp1 * s1 + dp2 * s2;
      const double rhs = dx1 * x1a + dx2 * x2a + du * ua;
      CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
    }
  }
}

TEST_CASE("replay reproduces the recorded final state bitwise") {
  CaseGenOptions opt;
  opt.nodes = 4;
  opt.horizon = 2;
  opt.contingencies = 1;
  opt.seed = 41;
  Case c = generate_case(opt);
  // Tape path requires analytic kinds only.
  for (auto it = c.net.groups.begin(); it != c.net.groups.end();) {
    if (it->kind == DeviceKind::battery) it = c.net.groups.erase(it);
    else ++it;
  }
  REQUIRE(validate(c.net, c.spec).empty());

  SolverConfig cfg;
  const Tape tape = solve_with_tape(c.net, c.spec, cfg, 120, nullptr, 50);
  CHECK(tape.checkpoints.size() == 3);
  CHECK(static_cast<int>(tape.rho_p_per_iter.size()) == 120);
  const SolverState again = replay(tape, c.net, c.spec);
  for (size_t gi = 0; gi < again.p.size(); ++gi) {
    CHECK(again.p[gi].data == tape.final_state.p[gi].data);
    CHECK(again.theta[gi].data == tape.final_state.theta[gi].data);
  }
  CHECK(again.u.data == tape.final_state.u.data);
}

TEST_CASE("tape rejects kinds without analytic proxes") {
  const Network net = testing::three_bus_network(2);  // contains a battery
  SolverConfig cfg;
  CHECK_THROWS_WITH_AS(solve_with_tape(net, {}, cfg, 10),
                       doctest::Contains("grad_fd"), std::invalid_argument);
}

TEST_CASE("zero-iteration tape has zero gradient under zero init") {
  Network net = binding_toy();
  SolverConfig cfg;
  const Tape tape = solve_with_tape(net, {}, cfg, 0);
  const auto g = grad(tape, net, {}, ParameterSelector::parse("generator.p_max"));
  REQUIRE(g.size() == 2);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("binding capacity gradient equals the cost spread") {
  const Network net = binding_toy();
  SolverConfig cfg;
  cfg.tol = 1e-8;
  const Tape tape = solve_with_tape(net, {}, cfg, 1000);
  const auto sel = ParameterSelector::parse("generator.p_max");
  const auto g = grad(tape, net, {}, sel);
  REQUIRE(g.size() == 2);
  // d cost / d p_max of the binding cheap unit: b_cheap - b_expensive = -2;
  // the slack unit's capacity has no effect.
  CHECK(g[0] == doctest::Approx(-2.0).epsilon(1e-2));
  CHECK(std::abs(g[1]) <= 1e-6);

  // Against the reference QP duals: d cost / d p_max = -lambda.
  const MonolithicQp mqp = assemble(net, {});
  const OracleSolution osol = solve_exact(mqp, net);
  REQUIRE(osol.status == QpStatus::optimal);
  const auto duals = generator_capacity_duals(mqp, osol, net, 0);
  CHECK(g[0] == doctest::Approx(-duals[0]).epsilon(1e-2));

  // Increasing a binding capacity never increases cost.
  CHECK(g[0] <= 1e-9);
  CHECK(g[1] <= 1e-9);
}

TEST_CASE("unrolled gradient matches central finite differences") {
  CaseGenOptions opt;
  opt.nodes = 3;
  opt.horizon = 2;
  opt.seed = 7;
  opt.load_scale = 0.65;
  Case c = generate_case(opt);
  for (auto it = c.net.groups.begin(); it != c.net.groups.end();) {
    if (it->kind == DeviceKind::battery) it = c.net.groups.erase(it);
    else ++it;
  }
  REQUIRE(validate(c.net, c.spec).empty());

  SolverConfig cfg;
  cfg.adaptive = true;
  const int iters = 200;
  const auto sel = ParameterSelector::parse("generator.p_max");
  const Tape tape = solve_with_tape(c.net, c.spec, cfg, iters);
  const auto g = grad(tape, c.net, c.spec, sel);
  const auto fd1 = grad_fd(c.net, c.spec, cfg, iters, sel, 1e-4);
  const auto fd2 = grad_fd(c.net, c.spec, cfg, iters, sel, 5e-5);
  REQUIRE(g.size() == fd1.size());

  int smooth = 0;
  for (size_t i = 0; i < g.size(); ++i) {
    // Use entries where the two stencils agree (no kink crossed).
    const double scale = std::max({1.0, std::abs(fd1[i]), std::abs(g[i])});
    if (std::abs(fd1[i] - fd2[i]) / scale > 1e-6) continue;
    ++smooth;
    CHECK(std::abs(g[i] - fd1[i]) / scale <= 1e-4);
  }
  CHECK(smooth >= static_cast<int>(g.size()) / 2);
}

TEST_CASE("finite differences support batteries and line capacities") {
  CaseGenOptions opt;
  opt.nodes = 3;
  opt.horizon = 2;
  opt.seed = 57;
  const Case c = generate_case(opt);
  SolverConfig cfg;
  const auto sel = ParameterSelector::parse("ac_line.capacity");
  const auto g = grad_fd(c.net, c.spec, cfg, 60, sel, 1e-4);
  CHECK(static_cast<int>(g.size()) == sel.size(c.net));
  for (double v : g) CHECK(std::isfinite(v));
}

TEST_CASE("selector parsing and sizing") {
  const Network net = binding_toy();
  const auto sel = ParameterSelector::parse("generator.p_max");
  CHECK(sel.size(net) == 2);
  CHECK(sel.labels(net)[0] == "gens/0/t0");
  CHECK_THROWS_AS(ParameterSelector::parse("generator.frequency"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ParameterSelector::parse("nonsense"), std::invalid_argument);

  const auto got = get_params(net, sel);
  CHECK(got == std::vector<double>{6.0, 10.0});
  Network net2 = net;
  set_params(net2, sel, {7.0, 11.0});
  CHECK(std::get<GeneratorParams>(net2.groups[0].params).p_max ==
        std::vector<double>{7.0, 11.0});
}

TEST_CASE("more iterations give more accurate sensitivities") {
  const Network net = binding_toy();
  SolverConfig cfg;
  const MonolithicQp mqp = assemble(net, {});
  const OracleSolution osol = solve_exact(mqp, net);
  const auto duals = generator_capacity_duals(mqp, osol, net, 0);
  const auto sel = ParameterSelector::parse("generator.p_max");

  double prev_err = 1e300;
  for (const int iters : {10, 100, 1000}) {
    const Tape tape = solve_with_tape(net, {}, cfg, iters);
    const auto g = grad(tape, net, {}, sel);
    double err = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
      err = std::max(err, std::abs(g[i] + duals[i]));
    }
    CHECK(err <= prev_err + 1e-12);
    prev_err = err;
  }
  CHECK(prev_err <= 1e-2);
}
