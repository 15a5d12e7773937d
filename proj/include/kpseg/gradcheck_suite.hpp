#pragma once

#include <string>
#include <vector>

#include "kpseg/gradcheck.hpp"

namespace kpseg {

struct LayerCheck {
  std::string layer;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

// Finite-difference verification of every layer type plus a full micro
// network (64-bit, central differences, eps 1e-6). Deterministic given seed.
std::vector<LayerCheck> run_gradient_checks(uint64_t seed = 7);

}  // namespace kpseg
