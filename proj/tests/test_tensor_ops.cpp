#include "doctest.h"

#include <Eigen/Dense>

#include "gridmp/tensor_ops.hpp"
#include "support/fixtures.hpp"

using namespace gridmp;
using gridmp::testing::Rng;

namespace {

// Terminal enumeration (group-major, device-major, slot-major) used to map
// schedule tensors onto flat vectors for the dense-matrix checks.
Eigen::VectorXd flatten_slice(const ScheduleTensor& x, const Network& net,
                              int k, int t) {
  Eigen::VectorXd v(net.num_terminals());
  int j = 0;
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    for (int d = 0; d < g.count; ++d) {
      for (int i = 0; i < g.terminals_per_device; ++i) {
        v[j++] = x[gi].at(k, d, i, t);
      }
    }
  }
  return v;
}

// Node-terminal incidence L (N x J) in the same enumeration.
Eigen::MatrixXd incidence(const Network& net) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(net.num_nodes, net.num_terminals());
  int j = 0;
  for (const auto& g : net.groups) {
    for (int d = 0; d < g.count; ++d) {
      for (int i = 0; i < g.terminals_per_device; ++i) {
        L(g.node_of(d, i), j++) = 1.0;
      }
    }
  }
  return L;
}

double dot(const ScheduleTensor& a, const ScheduleTensor& b) {
  double s = 0.0;
  for (size_t gi = 0; gi < a.size(); ++gi) {
    for (size_t i = 0; i < a[gi].data.size(); ++i) {
      s += a[gi].data[i] * b[gi].data[i];
    }
  }
  return s;
}

double dot(const NodeTensor& a, const NodeTensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double max_rel_err(const ScheduleTensor& a, const ScheduleTensor& b) {
  double m = 0.0, scale = 1.0;
  for (size_t gi = 0; gi < a.size(); ++gi) {
    for (size_t i = 0; i < a[gi].data.size(); ++i) {
      m = std::max(m, std::abs(a[gi].data[i] - b[gi].data[i]));
      scale = std::max(scale, std::abs(b[gi].data[i]));
    }
  }
  return m / scale;
}

}  // namespace

TEST_CASE("average of two terminals on one node") {
  Network net;
  net.num_nodes = 1;
  net.horizon = 1;
  DeviceGroup g;
  g.kind = DeviceKind::fixed_load;
  g.count = 2;
  g.terminals_per_device = 1;
  g.terminal_node = {0, 0};
  FixedLoadParams p;
  p.p_load = {0.0, 0.0};
  g.params = p;
  net.groups = {g};

  ScheduleTensor x = make_schedule(net);
  x[0].at(0, 0, 0, 0) = 1.0;
  x[0].at(0, 1, 0, 0) = 3.0;
  const NodeTensor avg = node_average(x, net, 1);
  CHECK(avg.at(0, 0, 0) == doctest::Approx(2.0));

  const ScheduleTensor resid = node_residual(x, avg, net);
  CHECK(resid[0].at(0, 0, 0, 0) == doctest::Approx(-1.0));
  CHECK(resid[0].at(0, 1, 0, 0) == doctest::Approx(1.0));

  SUBCASE("zero input stays zero") {
    ScheduleTensor z = make_schedule(net);
    const NodeTensor za = node_average(z, net, 1);
    for (double v : za.data) CHECK(v == 0.0);
  }
}

TEST_CASE("gather broadcasts node values to terminals") {
  const Network net = testing::three_bus_network();
  NodeTensor y(1, net.num_nodes, net.horizon);
  for (int t = 0; t < net.horizon; ++t) y.at(0, 1, t) = 7.0;
  const ScheduleTensor g = gather_to_terminals(y, net);
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& grp = net.groups[gi];
    for (int d = 0; d < grp.count; ++d) {
      for (int i = 0; i < grp.terminals_per_device; ++i) {
        const double want = grp.node_of(d, i) == 1 ? 7.0 : 0.0;
        CHECK(g[gi].at(0, d, i, 0) == want);
      }
    }
  }
}

TEST_CASE("scatter/gather adjoint identity") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Network net = testing::random_network(rng);
    ScheduleTensor x = make_schedule(net, true);
    NodeTensor y(1, net.num_nodes, net.horizon);
    testing::fill_random(x, rng);
    testing::fill_random(y, rng);
    const double lhs = dot(scatter_sum(x, net, 1), y);
    const double rhs = dot(x, gather_to_terminals(y, net));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("average and residual match the dense incidence formulas") {
  Rng rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    const Network net = rep == 0 ? testing::three_bus_network()
                                 : testing::random_network(rng);
    const Eigen::MatrixXd L = incidence(net);
    Eigen::VectorXd invdeg(net.num_nodes);
    const auto deg = node_degree(net);
    for (int n = 0; n < net.num_nodes; ++n) invdeg[n] = 1.0 / deg[n];
    const Eigen::MatrixXd A =
        L.transpose() * invdeg.asDiagonal() * L;  // terminal-level average
    const Eigen::MatrixXd R =
        Eigen::MatrixXd::Identity(A.rows(), A.cols()) - A;

    ScheduleTensor x = make_schedule(net, true);
    testing::fill_random(x, rng, 5.0);
    const NodeTensor avg = node_average(x, net, 1);
    const ScheduleTensor gath = gather_to_terminals(avg, net);
    const ScheduleTensor resid = node_residual(x, avg, net);

    for (int t = 0; t < net.horizon; ++t) {
      const Eigen::VectorXd xv = flatten_slice(x, net, 0, t);
      const Eigen::VectorXd want_avg = A * xv;
      const Eigen::VectorXd want_res = R * xv;
      const Eigen::VectorXd got_avg = flatten_slice(gath, net, 0, t);
      const Eigen::VectorXd got_res = flatten_slice(resid, net, 0, t);
      const double scale = std::max(1.0, xv.cwiseAbs().maxCoeff());
      CHECK((got_avg - want_avg).cwiseAbs().maxCoeff() / scale <= 1e-12);
      CHECK((got_res - want_res).cwiseAbs().maxCoeff() / scale <= 1e-12);
    }
  }
}

TEST_CASE("operator identities on random networks") {
  Rng rng(42);
  for (int rep = 0; rep < 50; ++rep) {
    const Network net = testing::random_network(rng);
    ScheduleTensor x = make_schedule(net, true);
    testing::fill_random(x, rng, 3.0);
    const int K1 = 1;

    const NodeTensor avg = node_average(x, net, K1);
    const ScheduleTensor gath = gather_to_terminals(avg, net);
    const ScheduleTensor resid = node_residual(x, avg, net);

    SUBCASE("") {}  // keep doctest quiet about empty subcases

    // Idempotence: avg(gather(avg)) == avg, resid(resid) == resid.
    const NodeTensor avg2 = node_average(gath, net, K1);
    for (size_t i = 0; i < avg.data.size(); ++i) {
      CHECK(avg2.data[i] == doctest::Approx(avg.data[i]).epsilon(1e-12));
    }
    const NodeTensor avg_of_resid = node_average(resid, net, K1);
    const ScheduleTensor resid2 = node_residual(resid, avg_of_resid, net);
    CHECK(max_rel_err(resid2, resid) <= 1e-12);

    // Cancellation: avg(resid) == 0 and resid(node-constant) == 0.
    for (double v : avg_of_resid.data) CHECK(std::abs(v) <= 1e-12 * 10.0);
    const NodeTensor avg_gath = node_average(gath, net, K1);
    const ScheduleTensor resid_gath = node_residual(gath, avg_gath, net);
    for (const auto& g : resid_gath) {
      for (double v : g.data) CHECK(std::abs(v) <= 1e-11);
    }

    // Orthogonality: <resid(x), gather(avg(x))> == 0.
    const double ip = dot(resid, gath);
    CHECK(std::abs(ip) <= 1e-9 * (1.0 + std::abs(dot(x, x))));

    // Linearity: ops commute with axpy.
    ScheduleTensor y = make_schedule(net, true);
    testing::fill_random(y, rng, 2.0);
    ScheduleTensor comb = x;
    axpy(2.5, y, comb);
    const NodeTensor avg_comb = node_average(comb, net, K1);
    const NodeTensor avg_y = node_average(y, net, K1);
    for (size_t i = 0; i < avg_comb.data.size(); ++i) {
      const double want = avg.data[i] + 2.5 * avg_y.data[i];
      CHECK(avg_comb.data[i] == doctest::Approx(want).epsilon(1e-12));
    }

    // Equivalence: resid(x) == 0 iff x == gather(avg(x)).
    const ScheduleTensor resid_of_gath = node_residual(gath, avg_gath, net);
    for (const auto& g : resid_of_gath) {
      for (double v : g.data) CHECK(std::abs(v) <= 1e-11);
    }
  }
}

TEST_CASE("contingency broadcasting covers shared groups") {
  Network net = testing::three_bus_network();
  net.contingency_group = 2;
  net.contingency_count = 2;
  ScheduleTensor x = make_schedule(net);
  CHECK(x[2].k_eff == 3);
  CHECK(x[0].k_eff == 1);
  // A shared group's values are read identically from every slice.
  x[0].at(0, 0, 0, 0) = 4.0;
  CHECK(x[0].at(2, 0, 0, 0) == 4.0);
  const NodeTensor avg = node_average(x, net, 3);
  CHECK(avg.k_eff == 3);
  CHECK(avg.at(0, 0, 0) == avg.at(2, 0, 0));
}
