#include "kpseg/sampling.hpp"

#include <cmath>
#include <numeric>

namespace kpseg {

SphereExtract extract_sphere(const LabeledCloud& cloud, const Vec3& center, double radius) {
  if (radius <= 0.0) throw ArgumentError("extract_sphere: radius must be > 0");
  SphereExtract out;
  const double r2 = radius * radius;
  for (uint32_t i = 0; i < cloud.size(); ++i) {
    if (squared_norm(cloud.coords[i] - center) > r2) continue;
    out.cloud.coords.push_back(cloud.coords[i]);
    if (cloud.has_intensity()) out.cloud.intensity.push_back(cloud.intensity[i]);
    if (cloud.has_labels()) out.cloud.labels.push_back(cloud.labels[i]);
    out.index_map.push_back(i);
  }
  return out;
}

LabeledCloud augment(const LabeledCloud& batch, const AugConfig& cfg, Rng& rng) {
  cfg.validate();
  LabeledCloud out = batch;
  const size_t n = out.size();

  if (cfg.shuffle && n > 1) {
    std::vector<uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(perm);
    LabeledCloud shuffled;
    shuffled.coords.resize(n);
    if (out.has_intensity()) shuffled.intensity.resize(n);
    if (out.has_labels()) shuffled.labels.resize(n);
    for (size_t i = 0; i < n; ++i) {
      shuffled.coords[i] = out.coords[perm[i]];
      if (out.has_intensity()) shuffled.intensity[i] = out.intensity[perm[i]];
      if (out.has_labels()) shuffled.labels[i] = out.labels[perm[i]];
    }
    out = std::move(shuffled);
  }

  Vec3 centroid{0, 0, 0};
  if (n > 0) {
    for (const Vec3& p : out.coords) centroid += p;
    centroid = centroid / static_cast<double>(n);
  }

  double s = rng.uniform(cfg.scale_min, cfg.scale_max);
  if (s != 1.0)
    for (Vec3& p : out.coords) p = centroid + (p - centroid) * s;

  if (cfg.rotate_z) {
    double theta = rng.uniform(0.0, 2.0 * M_PI);
    double c = std::cos(theta), sn = std::sin(theta);
    for (Vec3& p : out.coords) {
      double dx = p.x - centroid.x, dy = p.y - centroid.y;
      p.x = centroid.x + c * dx - sn * dy;
      p.y = centroid.y + sn * dx + c * dy;
    }
  }
  return out;
}

}  // namespace kpseg
