#include "gridmp/tensor_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace gridmp {

ScheduleTensor make_schedule(const Network& net, bool varying) {
  ScheduleTensor out;
  out.reserve(net.groups.size());
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const int k = varying ? net.num_slices() : net.k_eff(static_cast<int>(gi));
    out.emplace_back(k, g.count, g.terminals_per_device, net.horizon);
  }
  return out;
}

bool same_shape(const ScheduleTensor& a, const ScheduleTensor& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_shape(b[i])) return false;
  }
  return true;
}

namespace {

void check_schedule(const ScheduleTensor& x, const Network& net) {
  if (x.size() != net.groups.size()) {
    throw std::invalid_argument("schedule tensor group count mismatch");
  }
  for (size_t gi = 0; gi < x.size(); ++gi) {
    const auto& g = net.groups[gi];
    if (x[gi].count != g.count || x[gi].tau != g.terminals_per_device ||
        x[gi].horizon != net.horizon) {
      throw std::invalid_argument("schedule tensor shape mismatch in group " +
                                  std::to_string(gi));
    }
    if (x[gi].k_eff != 1 && x[gi].k_eff != net.num_slices()) {
      throw std::invalid_argument("schedule tensor slice count mismatch in group " +
                                  std::to_string(gi));
    }
  }
}

// Shared scatter core; normalize=true divides by node degree afterwards.
NodeTensor scatter_impl(const ScheduleTensor& x, const Network& net, int k_out,
                        bool normalize) {
  check_schedule(x, net);
  const int T = net.horizon;
  NodeTensor out(k_out, net.num_nodes, T);
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const auto& xt = x[gi];
    for (int k = 0; k < k_out; ++k) {
      for (int i = 0; i < g.terminals_per_device; ++i) {
        for (int d = 0; d < g.count; ++d) {
          const int n = g.node_of(d, i);
          double* dst = &out.at(k, n, 0);
          const double* src = &xt.data[xt.idx(k, d, i, 0)];
          for (int t = 0; t < T; ++t) dst[t] += src[t];
        }
      }
    }
  }
  if (normalize) {
    const std::vector<int> deg = node_degree(net);
    for (int k = 0; k < k_out; ++k) {
      for (int n = 0; n < net.num_nodes; ++n) {
        const double inv = 1.0 / static_cast<double>(deg[n]);
        double* dst = &out.at(k, n, 0);
        for (int t = 0; t < T; ++t) dst[t] *= inv;
      }
    }
  }
  return out;
}

}  // namespace

NodeTensor node_average(const ScheduleTensor& x, const Network& net, int k_out) {
  return scatter_impl(x, net, k_out, true);
}

NodeTensor scatter_sum(const ScheduleTensor& x, const Network& net, int k_out) {
  return scatter_impl(x, net, k_out, false);
}

ScheduleTensor node_residual(const ScheduleTensor& x, const NodeTensor& avg,
                             const Network& net) {
  check_schedule(x, net);
  if (avg.nodes != net.num_nodes || avg.horizon != net.horizon) {
    throw std::invalid_argument("node tensor shape mismatch");
  }
  const int T = net.horizon;
  const int K = avg.k_eff;
  ScheduleTensor out = make_schedule(net, /*varying=*/true);
  for (size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const auto& xt = x[gi];
    auto& ot = out[gi];
    ot = GroupTensor(K, g.count, g.terminals_per_device, T);
    for (int k = 0; k < K; ++k) {
      for (int d = 0; d < g.count; ++d) {
        for (int i = 0; i < g.terminals_per_device; ++i) {
          const int n = g.node_of(d, i);
          const double* src = &xt.data[xt.idx(k, d, i, 0)];
          const double* av = &avg.data[avg.idx(k, n, 0)];
          double* dst = &ot.at(k, d, i, 0);
          for (int t = 0; t < T; ++t) dst[t] = src[t] - av[t];
        }
      }
    }
  }
  return out;
}

ScheduleTensor gather_to_terminals(const NodeTensor& y, const Network& net) {
  if (y.nodes != net.num_nodes || y.horizon != net.horizon) {
    throw std::invalid_argument("node tensor shape mismatch");
  }
  const int T = net.horizon;
  const int K = y.k_eff;
  ScheduleTensor out;
  out.reserve(net.groups.size());
  for (const auto& g : net.groups) {
    GroupTensor ot(K, g.count, g.terminals_per_device, T);
    for (int k = 0; k < K; ++k) {
      for (int d = 0; d < g.count; ++d) {
        for (int i = 0; i < g.terminals_per_device; ++i) {
          const int n = g.node_of(d, i);
          const double* src = &y.data[y.idx(k, n, 0)];
          double* dst = &ot.at(k, d, i, 0);
          for (int t = 0; t < T; ++t) dst[t] = src[t];
        }
      }
    }
    out.push_back(std::move(ot));
  }
  return out;
}

GroupTensor contingency_average(const GroupTensor& x) {
  GroupTensor out(1, x.count, x.tau, x.horizon);
  const double inv = 1.0 / static_cast<double>(x.k_eff);
  const size_t slice = out.size();
  for (int k = 0; k < x.k_eff; ++k) {
    const double* src = x.data.data() + static_cast<size_t>(k) * slice;
    for (size_t i = 0; i < slice; ++i) out.data[i] += src[i];
  }
  for (size_t i = 0; i < slice; ++i) out.data[i] *= inv;
  return out;
}

double squared_norm(const ScheduleTensor& x) {
  double s = 0.0;
  for (const auto& g : x) {
    for (double v : g.data) s += v * v;
  }
  return s;
}

double squared_norm_terminal_weighted(const NodeTensor& y, const Network& net) {
  const std::vector<int> deg = node_degree(net);
  double s = 0.0;
  for (int k = 0; k < y.k_eff; ++k) {
    for (int n = 0; n < y.nodes; ++n) {
      double sn = 0.0;
      const double* src = &y.data[y.idx(k, n, 0)];
      for (int t = 0; t < y.horizon; ++t) sn += src[t] * src[t];
      s += sn * deg[n];
    }
  }
  return s;
}

void axpy(double a, const ScheduleTensor& x, ScheduleTensor& y) {
  for (size_t gi = 0; gi < x.size(); ++gi) {
    for (size_t i = 0; i < x[gi].data.size(); ++i) {
      y[gi].data[i] += a * x[gi].data[i];
    }
  }
}

void scale(ScheduleTensor& x, double a) {
  for (auto& g : x) {
    for (double& v : g.data) v *= a;
  }
}

double max_abs(const ScheduleTensor& x) {
  double m = 0.0;
  for (const auto& g : x) {
    for (double v : g.data) m = std::max(m, std::abs(v));
  }
  return m;
}

double max_abs(const NodeTensor& x) {
  double m = 0.0;
  for (double v : x.data) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const ScheduleTensor& x) {
  for (const auto& g : x) {
    for (double v : g.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace gridmp
