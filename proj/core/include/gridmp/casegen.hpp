#pragma once

#include <cstdint>

#include "gridmp/caseio.hpp"

namespace gridmp {

/// Synthetic case generation. The device mix follows the proportions of a
/// 500-node reference system (500 loads, 1392 generators, 1143 AC lines,
/// 3 DC lines, 74 batteries), scaled by nodes/500. Loads are curtailable:
/// generator-kind devices with box [-load, 0] and a 500 $/MWh price on
/// unserved energy, so every generated case has a feasible dispatch and
/// load scales up to ~0.7 dispatch without curtailment.
struct CaseGenOptions {
  int nodes = 10;
  int horizon = 4;
  int contingencies = 0;  // n-1 over randomly chosen AC lines
  double load_scale = 0.6;
  std::uint64_t seed = 0;
};

Case generate_case(const CaseGenOptions& opt);

}  // namespace gridmp
