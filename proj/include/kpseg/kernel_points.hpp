#pragma once

#include <cstdint>

#include "kpseg/geometry.hpp"

namespace kpseg {

// Geometric arrangement of the K kernel points inside the convolution ball:
// one point at the origin (the query), the remaining K-1 on the shell of
// radius `radius`. `influence` is the distance beyond which a kernel point
// stops contributing to a neighbor's weight.
struct KernelDisposition {
  Points points;       // kernel-local frame, centered at the query
  double radius = 0.0;
  double influence = 0.0;

  int count() const { return static_cast<int>(points.size()); }
};

inline constexpr int kDefaultKernelPoints = 15;
inline constexpr double kDefaultInfluenceRatio = 1.5;  // d = 1.5 r

// Places K - 1 shell points by electrostatic repulsion minimization on the
// sphere (projected gradient descent, fixed 10^4-iteration budget), plus the
// center point. Deterministic given the seed. The shell layout depends only
// on K and the seed; the radius is a uniform scale.
KernelDisposition generate_kernel_points(int k, double radius, uint64_t seed,
                                         double influence_ratio = kDefaultInfluenceRatio);

// Repulsion energy sum(1/dist) over shell point pairs, for unit-shell points.
double shell_repulsion_energy(const Points& shell);

// Smallest pairwise angle between shell points, in radians.
double min_shell_angle(const KernelDisposition& kd);

}  // namespace kpseg
