#include "kpseg/kernel_points.hpp"

#include <algorithm>
#include <cmath>

#include "kpseg/errors.hpp"
#include "kpseg/rng.hpp"

namespace kpseg {

namespace {

constexpr int kRepulsionIterations = 10000;

Points random_unit_points(int n, Rng& rng) {
  Points pts(n);
  for (Vec3& p : pts) {
    // rejection-sample the unit ball, then project to the sphere
    do {
      p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    } while (squared_norm(p) < 1e-6 || squared_norm(p) > 1.0);
    p = normalized(p);
  }
  return pts;
}

// Coulomb forces between unit-shell points. The fixed center point is
// equidistant from the whole shell and exerts no tangential force, so it is
// left out of the optimization.
void repulsion_forces(const Points& pts, Points& forces) {
  const size_t n = pts.size();
  for (Vec3& f : forces) f = {0, 0, 0};
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      Vec3 diff = pts[i] - pts[j];
      double d2 = squared_norm(diff);
      double inv = 1.0 / (d2 * std::sqrt(d2));
      Vec3 f = diff * inv;
      forces[i] += f;
      forces[j] -= f;
    }
  }
}

Points optimize_shell(int n, Rng& rng) {
  Points pts = random_unit_points(n, rng);
  if (n < 2) return pts;
  Points forces(n);
  double step = 0.1;
  double energy = shell_repulsion_energy(pts);
  Points trial(n);
  for (int it = 0; it < kRepulsionIterations; ++it) {
    repulsion_forces(pts, forces);
    // project out the radial component so the step stays near the sphere
    for (int i = 0; i < n; ++i) {
      Vec3 t = forces[i] - pts[i] * dot(forces[i], pts[i]);
      trial[i] = normalized(pts[i] + t * step);
    }
    double trial_energy = shell_repulsion_energy(trial);
    if (trial_energy < energy) {
      pts.swap(trial);
      energy = trial_energy;
      step *= 1.1;
    } else {
      step *= 0.5;
      if (step < 1e-14) step = 1e-14;
    }
  }
  return pts;
}

}  // namespace

double shell_repulsion_energy(const Points& shell) {
  double e = 0.0;
  for (size_t i = 0; i < shell.size(); ++i)
    for (size_t j = i + 1; j < shell.size(); ++j)
      e += 1.0 / norm(shell[i] - shell[j]);
  return e;
}

double min_shell_angle(const KernelDisposition& kd) {
  double best = M_PI;
  for (size_t i = 1; i < kd.points.size(); ++i) {
    for (size_t j = i + 1; j < kd.points.size(); ++j) {
      double c = dot(normalized(kd.points[i]), normalized(kd.points[j]));
      best = std::min(best, std::acos(std::clamp(c, -1.0, 1.0)));
    }
  }
  return best;
}

KernelDisposition generate_kernel_points(int k, double radius, uint64_t seed,
                                         double influence_ratio) {
  if (k < 2) throw ArgumentError("generate_kernel_points: need K >= 2");
  if (radius <= 0.0) throw ArgumentError("generate_kernel_points: radius must be > 0");
  if (influence_ratio <= 0.0) throw ArgumentError("generate_kernel_points: influence must be > 0");

  Rng rng(seed);
  Points shell = optimize_shell(k - 1, rng);

  KernelDisposition kd;
  kd.radius = radius;
  kd.influence = influence_ratio * radius;
  kd.points.reserve(k);
  kd.points.push_back({0, 0, 0});
  for (const Vec3& p : shell) kd.points.push_back(p * radius);
  return kd;
}

}  // namespace kpseg
