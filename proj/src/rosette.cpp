#include "kpseg/rosette.hpp"

#include <cmath>

#include "kpseg/errors.hpp"
#include "kpseg/rng.hpp"

namespace kpseg {

namespace {

// Continued-fraction probe: rejects frequency pairs whose ratio is within
// tol of a rational with a small denominator (those retrace the same petals).
bool near_small_rational(double ratio, int max_den, double tol) {
  for (int q = 1; q <= max_den; ++q) {
    double p = std::round(ratio * q);
    if (p < 1) continue;
    if (std::abs(ratio - p / q) < tol) return true;
  }
  return false;
}

}  // namespace

void RosetteConfig::validate() const {
  if (!(fov_deg > 0.0 && fov_deg < 180.0))
    throw ArgumentError("rosette: fov must be in (0, 180) degrees");
  if (rate <= 0.0) throw ArgumentError("rosette: rate must be > 0");
  if (f_petal <= 0.0 || f_spin <= 0.0) throw ArgumentError("rosette: frequencies must be > 0");
  if (range_max <= 0.0) throw ArgumentError("rosette: range_max must be > 0");
  if (range_noise_sigma < 0.0) throw ArgumentError("rosette: noise sigma must be >= 0");
  if (near_small_rational(f_spin / f_petal, 8, 1e-4))
    throw ArgumentError("rosette: f_spin / f_petal is too close to a small rational");
}

Vec3 rosette_direction(const RosetteConfig& cfg, double t) {
  const double theta_max = cfg.fov_deg * M_PI / 360.0;  // half angle in rad
  double theta = theta_max * std::abs(std::sin(2.0 * M_PI * cfg.f_petal * t));
  double phi = 2.0 * M_PI * cfg.f_spin * t;
  double st = std::sin(theta);
  return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
}

std::vector<TimedDirection> rosette_directions(const RosetteConfig& cfg, double t0, double t1) {
  if (!(t1 > t0)) throw ArgumentError("rosette_directions: need t1 > t0");
  cfg.validate();
  auto n = static_cast<int64_t>(std::llround(cfg.rate * (t1 - t0)));
  std::vector<TimedDirection> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    double t = t0 + static_cast<double>(i) / cfg.rate;
    out.push_back({t, rosette_direction(cfg, t)});
  }
  return out;
}

double fov_coverage(const RosetteConfig& cfg, double t, int grid_res) {
  if (grid_res < 32) throw ArgumentError("fov_coverage: grid_res must be >= 32");
  if (t < 0.0) throw ArgumentError("fov_coverage: t must be >= 0");
  cfg.validate();

  const double theta_max = cfg.fov_deg * M_PI / 360.0;
  std::vector<uint8_t> marked(static_cast<size_t>(grid_res) * grid_res, 0);

  if (t > 0.0) {
    auto n = static_cast<int64_t>(std::llround(cfg.rate * t));
    for (int64_t i = 0; i < n; ++i) {
      double ti = static_cast<double>(i) / cfg.rate;
      double rho = std::abs(std::sin(2.0 * M_PI * cfg.f_petal * ti));  // theta / theta_max
      double phi = 2.0 * M_PI * cfg.f_spin * ti;
      double u = rho * std::cos(phi), v = rho * std::sin(phi);
      int ix = std::min(grid_res - 1, std::max(0, static_cast<int>((u + 1.0) * 0.5 * grid_res)));
      int iy = std::min(grid_res - 1, std::max(0, static_cast<int>((v + 1.0) * 0.5 * grid_res)));
      marked[static_cast<size_t>(iy) * grid_res + ix] = 1;
    }
  }
  (void)theta_max;

  int64_t disk_cells = 0, covered = 0;
  for (int iy = 0; iy < grid_res; ++iy) {
    for (int ix = 0; ix < grid_res; ++ix) {
      double cx = (ix + 0.5) * 2.0 / grid_res - 1.0;
      double cy = (iy + 0.5) * 2.0 / grid_res - 1.0;
      if (cx * cx + cy * cy > 1.0) continue;
      ++disk_cells;
      covered += marked[static_cast<size_t>(iy) * grid_res + ix];
    }
  }
  return disk_cells == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(disk_cells);
}

LabeledCloud rosette_scan(const Scene& scene, const TriangleBvh& bvh, const SensorPose& pose,
                          const RosetteConfig& cfg, double duration, uint64_t seed) {
  if (duration <= 0.0) throw ArgumentError("rosette_scan: duration must be > 0");
  cfg.validate();

  Vec3 z = normalized(pose.boresight);
  if (norm(z) == 0.0) throw ArgumentError("rosette_scan: zero boresight");
  Vec3 x = cross(pose.up_hint, z);
  if (norm(x) < 1e-9) throw ArgumentError("rosette_scan: up_hint collinear with boresight");
  x = normalized(x);
  Vec3 y = cross(z, x);

  Rng rng(seed);
  LabeledCloud cloud;
  auto n = static_cast<int64_t>(std::llround(cfg.rate * duration));
  for (int64_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / cfg.rate;
    Vec3 local = rosette_direction(cfg, t);
    Vec3 dir = x * local.x + y * local.y + z * local.z;
    auto hit = bvh.intersect(pose.position, dir, cfg.range_max);
    if (!hit) continue;
    double range = hit->distance + cfg.range_noise_sigma * rng.normal();
    cloud.coords.push_back(pose.position + dir * range);
    Vec3 normal = bvh.triangle(hit->triangle).normal();
    cloud.intensity.push_back(std::abs(dot(dir, normal)));
    cloud.labels.push_back(static_cast<uint8_t>(scene.primitives[hit->primitive].class_id));
  }
  return cloud;
}

LabeledCloud rosette_scan(const Scene& scene, const SensorPose& pose, const RosetteConfig& cfg,
                          double duration, uint64_t seed) {
  TriangleBvh bvh(scene.primitives);
  return rosette_scan(scene, bvh, pose, cfg, duration, seed);
}

}  // namespace kpseg
