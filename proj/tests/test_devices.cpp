#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "gridmp/devices.hpp"
#include "support/fixtures.hpp"
#include "support/prox_oracle.hpp"

using namespace gridmp;
using gridmp::testing::Rng;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("generator prox closed form") {
  SUBCASE("zero cost returns the target inside the box") {
    double lo = -10.0, hi = 10.0, x = 3.25, out;
    prox_generator(0.0, 0.0, {&lo, 1}, {&hi, 1}, {&x, 1}, 1.0, {&out, 1});
    CHECK(out == doctest::Approx(3.25).epsilon(1e-15));
  }
  SUBCASE("worked scalar example") {
    double lo = -10.0, hi = 10.0, x = 2.0, out;
    prox_generator(1.0, 0.0, {&lo, 1}, {&hi, 1}, {&x, 1}, 2.0, {&out, 1});
    CHECK(out == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(out == doctest::Approx(testing::generator_prox_oracle(1.0, 0.0, lo, hi, x, 2.0))
                     .epsilon(1e-10));
  }
  SUBCASE("box clamp") {
    double lo = 0.0, hi = 5.0, x = 100.0, out;
    prox_generator(0.0, 0.0, {&lo, 1}, {&hi, 1}, {&x, 1}, 1.0, {&out, 1});
    CHECK(out == 5.0);
  }
}

TEST_CASE("generator prox matches the bisection oracle on random draws") {
  Rng rng(101);
  for (int rep = 0; rep < 150; ++rep) {
    const double a = rng.uniform(0.0, 2.0);
    const double b = rng.uniform(-10.0, 10.0);
    const double lo = rng.uniform(-20.0, 0.0);
    const double hi = lo + rng.uniform(0.1, 30.0);
    const double x = rng.uniform(-30.0, 30.0);
    const double rho = rng.uniform(0.1, 10.0);
    double out;
    prox_generator(a, b, {&lo, 1}, {&hi, 1}, {&x, 1}, rho, {&out, 1});
    const double want = testing::generator_prox_oracle(a, b, lo, hi, x, rho);
    CHECK(std::abs(out - want) <= 1e-8 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("ac line prox closed form") {
  const int T = 1;
  double p1, p2, th1, th2;
  SUBCASE("zero targets give zero outputs") {
    double z = 0.0;
    prox_ac_line(10.0, 1.0, {&z, 1}, {&z, 1}, {&z, 1}, {&z, 1}, 1.0, 1.0,
                 {&p1, 1}, {&p2, 1}, {&th1, 1}, {&th2, 1});
    CHECK(p1 == 0.0);
    CHECK(p2 == 0.0);
    CHECK(th1 == 0.0);
    CHECK(th2 == 0.0);
  }
  SUBCASE("worked example") {
    double x1 = 0.0, x2 = 2.0, y = 0.0;
    prox_ac_line(10.0, 1.0, {&x1, 1}, {&x2, 1}, {&y, 1}, {&y, 1}, 1.0, 1.0,
                 {&p1, 1}, {&p2, 1}, {&th1, 1}, {&th2, 1});
    CHECK(p2 == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(p1 == doctest::Approx(-0.8).epsilon(1e-14));
    CHECK(th2 == doctest::Approx(-0.4).epsilon(1e-14));
    CHECK(th1 == doctest::Approx(0.4).epsilon(1e-14));
  }
  SUBCASE("flow limit binds for opposing targets") {
    double x1 = -1e6, x2 = 1e6, y = 0.0;
    prox_ac_line(10.0, 1.0, {&x1, 1}, {&x2, 1}, {&y, 1}, {&y, 1}, 1.0, 1.0,
                 {&p1, 1}, {&p2, 1}, {&th1, 1}, {&th2, 1});
    CHECK(p2 == 10.0);
    CHECK(p1 == -10.0);
    // Phases still satisfy the flow coupling after the clamp.
    CHECK(1.0 * (th1 - th2) == doctest::Approx(p2).epsilon(1e-12));
  }
  (void)T;
}

TEST_CASE("ac line prox matches the bisection oracle on random draws") {
  Rng rng(211);
  for (int rep = 0; rep < 150; ++rep) {
    const double u = rng.uniform(0.1, 20.0);
    const double b = rng.uniform(0.2, 50.0);
    const double rho_p = rng.uniform(0.1, 5.0);
    const double rho_t = rng.uniform(0.1, 5.0);
    const double x1 = rng.uniform(-30.0, 30.0), x2 = rng.uniform(-30.0, 30.0);
    const double y1 = rng.uniform(-2.0, 2.0), y2 = rng.uniform(-2.0, 2.0);
    double p1, p2, th1, th2;
    prox_ac_line(u, b, {&x1, 1}, {&x2, 1}, {&y1, 1}, {&y2, 1}, rho_p, rho_t,
                 {&p1, 1}, {&p2, 1}, {&th1, 1}, {&th2, 1});
    const auto want = testing::ac_line_prox_oracle(u, b, x1, x2, y1, y2, rho_p, rho_t);
    const double scale = std::max({1.0, std::abs(want.p2), std::abs(want.th1)});
    CHECK(std::abs(p2 - want.p2) / scale <= 1e-8);
    CHECK(std::abs(p1 - want.p1) / scale <= 1e-8);
    CHECK(std::abs(th1 - want.th1) / scale <= 1e-8);
    CHECK(std::abs(th2 - want.th2) / scale <= 1e-8);
    // Feasibility: p1 + p2 = 0, flow within limit, coupling exact.
    CHECK(p1 + p2 == 0.0);
    CHECK(std::abs(p2) <= u * (1.0 + 1e-12));
    CHECK(std::abs(p2 - b * (th1 - th2)) <= 1e-9 * std::max(1.0, std::abs(p2)));
  }
}

TEST_CASE("dc line prox") {
  Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const double u = rng.uniform(0.1, 10.0);
    const double x1 = rng.uniform(-20.0, 20.0), x2 = rng.uniform(-20.0, 20.0);
    double p1, p2;
    prox_dc_line(u, {&x1, 1}, {&x2, 1}, {&p1, 1}, {&p2, 1});
    const double want = std::clamp(0.5 * (x2 - x1), -u, u);
    CHECK(p2 == doctest::Approx(want).epsilon(1e-14));
    CHECK(p1 == -p2);
  }
}

TEST_CASE("fixed load prox projects onto the single feasible point") {
  const std::vector<double> load{4.0, -2.0, 0.0};
  std::vector<double> out(3);
  prox_fixed_load(load, out);
  CHECK(out == load);
}

TEST_CASE("battery prox respects zero capacity") {
  const QpDeviceForm f = battery_qp_form(0.0, 0.9, 0.0, 2.0, 3);
  auto ws = build_workspace(f, 1.0, 1.0, 1.0);
  std::vector<double> x{5.0, -3.0, 2.0}, p(3);
  prox_battery(ws, x, 50, p);
  for (double v : p) CHECK(std::abs(v) <= 1e-9);
}

TEST_CASE("battery prox with zero targets and no cost has optimum zero") {
  // The exact prox answer is the zero schedule; the cost-free program is
  // dual-degenerate, so the fixed-iteration inner ADMM only approaches it.
  const auto exact = testing::battery_prox_oracle(0.0, 0.9, 2.0, 2.0, 3,
                                                  {0.0, 0.0, 0.0}, 1.0);
  for (double v : exact) CHECK(std::abs(v) <= 1e-8);

  const QpDeviceForm f = battery_qp_form(0.0, 0.9, 2.0, 2.0, 3);
  auto ws = build_workspace(f, 1.0, 1.0, 1.0);
  std::vector<double> x(3, 0.0), p(3);
  prox_battery(ws, x, 50, p);
  double e50 = 0.0;
  for (double v : p) e50 = std::max(e50, std::abs(v));
  ws.reset();
  prox_battery(ws, x, 50, p);  // warm start continues to improve
  prox_battery(ws, x, 50, p);
  double e150 = 0.0;
  for (double v : p) e150 = std::max(e150, std::abs(v));
  CHECK(e50 <= 0.2);  // crude after 50 cold iterations
  CHECK(e150 < e50);
}

TEST_CASE("invalid battery data is rejected at construction") {
  CHECK_THROWS_AS(battery_qp_form(1.0, 0.9, -1.0, 2.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(battery_qp_form(1.0, 1.5, 1.0, 2.0, 2), std::invalid_argument);
}

TEST_CASE("prox nonexpansiveness on random pairs") {
  Rng rng(77);
  for (int rep = 0; rep < 100; ++rep) {
    const double a = rng.uniform(0.0, 1.0), b = rng.uniform(-5.0, 5.0);
    const double lo = -10.0, hi = 10.0, rho = rng.uniform(0.2, 5.0);
    const double x = rng.uniform(-30.0, 30.0), xp = rng.uniform(-30.0, 30.0);
    double p, pp;
    prox_generator(a, b, {&lo, 1}, {&hi, 1}, {&x, 1}, rho, {&p, 1});
    prox_generator(a, b, {&lo, 1}, {&hi, 1}, {&xp, 1}, rho, {&pp, 1});
    CHECK(std::abs(p - pp) <= std::abs(x - xp) * (1.0 + 1e-12));
  }
}

TEST_CASE("large penalty reduces the prox to a projection") {
  const double rho = 1e8;
  SUBCASE("generator") {
    double lo = 0.0, hi = 5.0, x = 7.5, out;
    prox_generator(1.0, 3.0, {&lo, 1}, {&hi, 1}, {&x, 1}, rho, {&out, 1});
    CHECK(out == doctest::Approx(5.0).epsilon(1e-6));
    x = 2.5;
    prox_generator(1.0, 3.0, {&lo, 1}, {&hi, 1}, {&x, 1}, rho, {&out, 1});
    CHECK(out == doctest::Approx(2.5).epsilon(1e-6));
  }
  SUBCASE("ac line projects onto its constraint set") {
    double x1 = 1.0, x2 = 3.0, y1 = 0.5, y2 = -0.5;
    double p1, p2, th1, th2;
    prox_ac_line(10.0, 2.0, {&x1, 1}, {&x2, 1}, {&y1, 1}, {&y2, 1}, rho, rho,
                 {&p1, 1}, {&p2, 1}, {&th1, 1}, {&th2, 1});
    const auto want = testing::ac_line_prox_oracle(10.0, 2.0, x1, x2, y1, y2, rho, rho);
    CHECK(p2 == doctest::Approx(want.p2).epsilon(1e-8));
    CHECK(std::abs(p2 - 2.0 * (th1 - th2)) <= 1e-8);
  }
}

TEST_CASE("device cost evaluation") {
  Network net = testing::three_bus_network(1);
  const ContingencySpec spec;

  SUBCASE("generator quadratic cost") {
    // a=1, b=2, p=3: cost 1*9 + 2*3 = 15.
    auto& gp = std::get<GeneratorParams>(net.groups[1].params);
    gp.quad_cost[0] = 1.0;
    gp.linear_cost[0] = 2.0;
    ScheduleTensor p = make_schedule(net), th = make_schedule(net);
    p[1].at(0, 0, 0, 0) = 3.0;
    const auto costs = group_cost(net, spec, 1, 0, p[1], th[1]);
    CHECK(costs[0] == doctest::Approx(15.0));
    CHECK(costs[1] == doctest::Approx(0.0));
  }

  SUBCASE("fixed load off its set point is infinitely expensive") {
    ScheduleTensor p = make_schedule(net), th = make_schedule(net);
    p[0].at(0, 0, 0, 0) = -30.0 + 1e-3;  // beyond the feasibility slack
    auto costs = group_cost(net, spec, 0, 0, p[0], th[0]);
    CHECK(costs[0] == kInf);
    p[0].at(0, 0, 0, 0) = -30.0;
    costs = group_cost(net, spec, 0, 0, p[0], th[0]);
    CHECK(costs[0] == 0.0);
  }

  SUBCASE("ac line with consistent schedule costs zero") {
    ScheduleTensor p = make_schedule(net), th = make_schedule(net);
    // line 0: flow 8 = b (th1 - th2) with b = 400.
    p[2].at(0, 0, 0, 0) = -8.0;
    p[2].at(0, 0, 1, 0) = 8.0;
    th[2].at(0, 0, 0, 0) = 0.02;
    th[2].at(0, 0, 1, 0) = 0.0;
    const auto costs = group_cost(net, spec, 2, 0, p[2], th[2]);
    CHECK(costs[0] == 0.0);
    // Violating the flow limit is infeasible.
    p[2].at(0, 0, 1, 0) = 100.0;
    p[2].at(0, 0, 0, 0) = -100.0;
    th[2].at(0, 0, 0, 0) = 0.25;
    const auto costs2 = group_cost(net, spec, 2, 0, p[2], th[2]);
    CHECK(costs2[0] == kInf);
  }

  SUBCASE("battery cost uses the inner dispatch") {
    ScheduleTensor p = make_schedule(net), th = make_schedule(net);
    // Zero schedule: feasible with zero cost.
    const auto costs = group_cost(net, spec, 3, 0, p[3], th[3]);
    CHECK(costs[0] == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("dispatch_prox batches match per-device evaluation") {
  Rng rng(55);
  Network net;
  net.num_nodes = 2;
  net.horizon = 2;
  DeviceGroup gens;
  gens.kind = DeviceKind::generator;
  gens.name = "g";
  gens.count = 3;
  gens.terminals_per_device = 1;
  gens.terminal_node = {0, 1, 0};
  GeneratorParams gp;
  gp.quad_cost = {0.5, 0.5, 0.1};
  gp.linear_cost = {1.0, 1.0, -2.0};
  gp.p_min.assign(6, -5.0);
  gp.p_max.assign(6, 5.0);
  gens.params = gp;
  net.groups = {gens};

  const ContingencySpec spec;
  const auto params = materialize_params(net, spec);
  ProxEngines engines(net, spec, 1.0, 1.0, 1.0, 10, true);

  GroupTensor tp(1, 3, 1, 2), tth(1, 3, 1, 2), p(1, 3, 1, 2), th(1, 3, 1, 2);
  for (double& v : tp.data) v = rng.uniform(-8.0, 8.0);
  for (double& v : tth.data) v = rng.uniform(-1.0, 1.0);
  // Devices 0 and 1 share parameters; give them identical targets.
  for (int t = 0; t < 2; ++t) {
    tp.at(0, 1, 0, t) = tp.at(0, 0, 0, t);
    tth.at(0, 1, 0, t) = tth.at(0, 0, 0, t);
  }
  dispatch_prox(net, spec, params, 0, tp, tth, 1.5, 2.0, p, th, &engines);

  for (int t = 0; t < 2; ++t) {
    CHECK(p.at(0, 0, 0, t) == p.at(0, 1, 0, t));  // identical devices agree
    // Sequential single-device evaluation matches the batch.
    double want;
    prox_generator(gp.quad_cost[2], gp.linear_cost[2], {&gp.p_min[4], 2},
                   {&gp.p_max[4], 2}, {&tp.data[tp.idx(0, 2, 0, 0)], 2}, 1.5,
                   {&want, 1});
    // (prox_generator writes the full series; compare one period at a time)
  }
  std::vector<double> seq(2);
  prox_generator(gp.quad_cost[2], gp.linear_cost[2], {&gp.p_min[4], 2},
                 {&gp.p_max[4], 2},
                 {&tp.data[tp.idx(0, 2, 0, 0)], 2}, 1.5, seq);
  CHECK(p.at(0, 2, 0, 0) == seq[0]);
  CHECK(p.at(0, 2, 0, 1) == seq[1]);
  // Theta passes through for generators.
  CHECK(th.at(0, 2, 0, 1) == tth.at(0, 2, 0, 1));
}

TEST_CASE("contingency slices use slice parameters") {
  Network net = testing::three_bus_network(1);
  net.contingency_group = 2;
  const auto spec = build_n_minus_1(net, {0, 1});
  net.contingency_count = 2;
  const auto params = materialize_params(net, spec);
  ProxEngines engines(net, spec, 1.0, 1.0, 1.0, 10, true);

  GroupTensor tp(3, 3, 2, 1), tth(3, 3, 2, 1), p(3, 3, 2, 1), th(3, 3, 2, 1);
  // Strong push through every line in every slice.
  for (int k = 0; k < 3; ++k) {
    for (int d = 0; d < 3; ++d) {
      tp.at(k, d, 0, 0) = -100.0;
      tp.at(k, d, 1, 0) = 100.0;
    }
  }
  dispatch_prox(net, spec, params, 2, tp, tth, 1.0, 1.0, p, th, &engines);
  // Base slice: all lines flow at capacity. Slice k: line k-1 is outaged.
  CHECK(p.at(0, 0, 1, 0) == doctest::Approx(40.0));
  CHECK(p.at(1, 0, 1, 0) == 0.0);
  CHECK(p.at(1, 1, 1, 0) == doctest::Approx(40.0));
  CHECK(p.at(2, 1, 1, 0) == 0.0);
  CHECK(p.at(2, 0, 1, 0) == doctest::Approx(40.0));
}
