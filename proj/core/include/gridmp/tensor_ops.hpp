#pragma once

#include "gridmp/network.hpp"
#include "gridmp/tensor.hpp"

namespace gridmp {

/// Node average: out[k,n,t] = (1/|n|) sum_{terminals j in n} x[k,j,t].
/// Groups with a single slice broadcast across all k. The scatter reduction
/// order is fixed (group-major, slot-major, device-major) so sums are
/// bitwise deterministic.
NodeTensor node_average(const ScheduleTensor& x, const Network& net, int k_out);

/// Unnormalized scatter: out[k,n,t] = sum_{j in n} x[k,j,t].
NodeTensor scatter_sum(const ScheduleTensor& x, const Network& net, int k_out);

/// Residual: out[k,j,t] = x[k,j,t] - avg[k,node(j),t]. Output carries k_out
/// slices on every group (the residual of a shared schedule differs per
/// contingency).
ScheduleTensor node_residual(const ScheduleTensor& x, const NodeTensor& avg,
                             const Network& net);

/// Adjoint of scatter: out[k,j,t] = y[k,node(j),t], K+1 slices on every group.
ScheduleTensor gather_to_terminals(const NodeTensor& y, const Network& net);

/// Mean over the contingency axis: out has k_eff = 1.
GroupTensor contingency_average(const GroupTensor& x);

/// Squared L2 norm over all entries of every group, counting each stored
/// slice once (call on tensors already expanded to the slices you mean).
double squared_norm(const ScheduleTensor& x);

/// Squared L2 norm of a node tensor read at terminal level, i.e. each node
/// entry weighted by its degree.
double squared_norm_terminal_weighted(const NodeTensor& y, const Network& net);

/// Elementwise helpers used by the solver; shapes must match exactly.
void axpy(double a, const ScheduleTensor& x, ScheduleTensor& y);  // y += a*x
void scale(ScheduleTensor& x, double a);
double max_abs(const ScheduleTensor& x);
double max_abs(const NodeTensor& x);
bool all_finite(const ScheduleTensor& x);

}  // namespace gridmp
