#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "gridmp/network.hpp"

namespace gridmp {

/// Dense batch tensor for one type group, shape (k_eff, count, tau, T),
/// row-major. k_eff is K+1 for contingency-varying quantities and 1 for
/// quantities shared across contingencies.
struct GroupTensor {
  int k_eff = 1;
  int count = 0;
  int tau = 1;
  int horizon = 1;
  std::vector<double> data;

  GroupTensor() = default;
  GroupTensor(int k, int c, int tu, int T)
      : k_eff(k), count(c), tau(tu), horizon(T),
        data(static_cast<size_t>(k) * c * tu * T, 0.0) {}

  /// Reads slice k, broadcasting k_eff == 1 against any k.
  double& at(int k, int d, int i, int t) {
    return data[idx(k, d, i, t)];
  }
  double at(int k, int d, int i, int t) const {
    return data[idx(k, d, i, t)];
  }
  size_t idx(int k, int d, int i, int t) const {
    const int ks = (k_eff == 1) ? 0 : k;
    return ((static_cast<size_t>(ks) * count + d) * tau + i) * horizon + t;
  }
  size_t size() const { return data.size(); }
  bool same_shape(const GroupTensor& o) const {
    return k_eff == o.k_eff && count == o.count && tau == o.tau &&
           horizon == o.horizon;
  }
};

/// Per-group schedule tensors, aligned with Network::groups.
using ScheduleTensor = std::vector<GroupTensor>;

/// Dense node-level tensor, shape (K+1, N, T), row-major.
struct NodeTensor {
  int k_eff = 1;
  int nodes = 0;
  int horizon = 1;
  std::vector<double> data;

  NodeTensor() = default;
  NodeTensor(int k, int n, int T)
      : k_eff(k), nodes(n), horizon(T),
        data(static_cast<size_t>(k) * n * T, 0.0) {}

  double& at(int k, int n, int t) { return data[idx(k, n, t)]; }
  double at(int k, int n, int t) const { return data[idx(k, n, t)]; }
  size_t idx(int k, int n, int t) const {
    const int ks = (k_eff == 1) ? 0 : k;
    return (static_cast<size_t>(ks) * nodes + n) * horizon + t;
  }
  size_t size() const { return data.size(); }
};

/// Allocates a zero schedule tensor; `varying` forces K+1 slices on every
/// group (used for duplicate variables and duals), otherwise only the
/// contingency group gets K+1 slices.
ScheduleTensor make_schedule(const Network& net, bool varying = false);

bool same_shape(const ScheduleTensor& a, const ScheduleTensor& b);

}  // namespace gridmp
