#pragma once

#include <cstdint>
#include <vector>

#include "kpseg/cloud.hpp"
#include "kpseg/rng.hpp"

namespace kpseg {

struct SphereExtract {
  LabeledCloud cloud;
  std::vector<uint32_t> index_map;  // original index of each extracted point
};

// All points with ||p - center|| <= radius, in original order.
SphereExtract extract_sphere(const LabeledCloud& cloud, const Vec3& center, double radius);

struct AugConfig {
  double scale_min = 0.9;
  double scale_max = 1.1;
  bool rotate_z = true;
  bool shuffle = true;

  void validate() const {
    if (!(scale_min > 0.0) || scale_min > scale_max)
      throw ArgumentError("augment: need 0 < scale_min <= scale_max");
  }
};

// Training-time augmentation, applied in order: point-order shuffle (labels
// and intensity co-permuted), uniform scale about the batch centroid, then
// rotation by a uniform angle about the vertical axis through the centroid.
// Deterministic given the rng state; the scale draw happens even when
// scale_min == scale_max so the random stream does not depend on the config
// values, only on which stages are enabled.
LabeledCloud augment(const LabeledCloud& batch, const AugConfig& cfg, Rng& rng);

}  // namespace kpseg
