#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sidlab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // the measured quantity behind the verdict
};

/// Desk-scale property suite: forward-process equivalence, the one-step SID law,
/// corrector equivalence, mask collapse, critic identities, DDM freezing under mask
/// noise, MPNN gradients and permutation equivariance. Runs in a few seconds.
std::vector<CheckResult> run_property_suite(std::uint64_t seed);

}  // namespace sidlab
