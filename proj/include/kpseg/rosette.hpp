#pragma once

#include <cstdint>
#include <vector>

#include "kpseg/cloud.hpp"
#include "kpseg/scene.hpp"

namespace kpseg {

// Livox-style incommensurable rosette scan model: the beam offset from the
// boresight follows a rose curve theta(t) = (fov/2) |sin(2 pi f_petal t)|
// while the azimuth spins at f_spin. The default frequency pair is
// golden-ratio scaled so the pattern never repeats; values are calibrated so
// the field-of-view coverage matches the sensor datasheet bands
// (about 20% after 0.1 s, above 90% after 1 s at a 64-cell raster).
struct RosetteConfig {
  double fov_deg = 38.4;            // full cone angle
  double rate = 100000.0;           // points per second
  double f_petal = 32.0;            // Hz, petal (radial) frequency
  double f_spin = 24.4458247200;    // Hz; spin/petal = 0.76393... puts successive
                                    // petals a golden angle apart (never repeats)
  double range_max = 260.0;         // m
  double range_noise_sigma = 0.02;  // m

  void validate() const;
};

struct TimedDirection {
  double t;
  Vec3 dir;  // unit, sensor frame, boresight = +z
};

// Beam direction at time t in the sensor frame.
Vec3 rosette_direction(const RosetteConfig& cfg, double t);

// Samples round(rate * (t1 - t0)) directions at times t0 + i / rate.
std::vector<TimedDirection> rosette_directions(const RosetteConfig& cfg, double t0, double t1);

// Fraction of the FOV disk covered after integrating for t seconds: the disk
// is rasterized into grid_res^2 cells (cells whose center lies inside the
// disk count), a cell is covered when at least one beam sample lands in it.
double fov_coverage(const RosetteConfig& cfg, double t, int grid_res);

struct SensorPose {
  Vec3 position{0, 0, 0};
  Vec3 boresight{0, 0, -1};
  Vec3 up_hint{0, 1, 0};  // fixes the roll; must not be collinear with boresight
};

// Casts every rosette beam emitted over `duration` seconds into the scene's
// primitive geometry. The nearest hit within range_max wins (occlusion), its
// range is perturbed with N(0, sigma) noise and the returned point inherits
// the primitive's class label. Intensity is the Lambertian incidence cosine.
// Points come back ordered by timestamp.
LabeledCloud rosette_scan(const Scene& scene, const SensorPose& pose, const RosetteConfig& cfg,
                          double duration, uint64_t seed);
LabeledCloud rosette_scan(const Scene& scene, const TriangleBvh& bvh, const SensorPose& pose,
                          const RosetteConfig& cfg, double duration, uint64_t seed);

}  // namespace kpseg
