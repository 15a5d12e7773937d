#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kpseg/cloud.hpp"

namespace kpseg {

struct Tri {
  Vec3 a, b, c;
  Vec3 normal() const { return normalized(cross(b - a, c - a)); }
  double area() const { return 0.5 * norm(cross(b - a, c - a)); }
};

// Geometry of one scene object; provenance for both sampling and ray hits.
struct Primitive {
  ClassId class_id;
  std::vector<Tri> tris;
};

struct TerrainSpec {
  double amplitude = 1.5;  // heightfield amplitude, m
  double roughness = 0.08; // spatial frequency of the noise, 1/m
};

struct RoadSpec {
  std::array<double, 2> start{0.0, 0.0};
  std::array<double, 2> end{0.0, 0.0};
  double width = 7.0;
};

struct BridgeSpec {
  std::vector<std::array<double, 2>> polyline;  // deck centerline, plan view
  double width = 8.0;
  double elevation = 6.0;     // deck top surface height, m
  double pier_spacing = 15.0; // m along the centerline
};

struct CarSpec {
  int count = 8;
  std::array<double, 2> length{3.8, 5.0};
  std::array<double, 2> width{1.7, 2.0};
  std::array<double, 2> height{1.4, 1.8};
};

struct PoleSpec {
  int count = 10;
  std::array<double, 2> height{6.0, 10.0};
  std::array<double, 2> radius{0.08, 0.15};
};

struct SceneSpec {
  double extent_x = 40.0;  // scene spans [-extent/2, extent/2]
  double extent_y = 40.0;
  double density = 750.0;  // surface sampling density, points / m^2
  TerrainSpec terrain;
  std::vector<RoadSpec> roads;
  std::vector<BridgeSpec> bridges;
  CarSpec cars;
  PoleSpec poles;
  double guardrail_height = 1.0;  // 0 disables guardrails

  void validate() const;
};

struct PoleInfo {
  Vec3 base;
  double height = 0.0;
  double radius = 0.0;
};

struct Scene {
  LabeledCloud cloud;
  std::vector<Primitive> primitives;
  std::vector<PoleInfo> poles;  // construction parameters, for verification
};

// Randomized multi-layer interchange layout: two crossing decks at different
// elevations over terrain, ground roads, cars, poles and guardrails.
SceneSpec make_interchange_spec(double extent, double density, uint64_t layout_seed);

SceneSpec scene_spec_from_json(const std::string& text);
std::string scene_spec_to_json(const SceneSpec& spec);

// Samples every primitive surface at the target density; labels carry the
// generating primitive's class. Deterministic given (spec, seed).
Scene generate_scene(const SceneSpec& spec, uint64_t seed);

// ---- ray casting -------------------------------------------------------------

class TriangleBvh {
 public:
  explicit TriangleBvh(const std::vector<Primitive>& primitives);

  struct Hit {
    double distance;
    uint32_t primitive;
    uint32_t triangle;  // index into the flattened triangle list
  };

  // Nearest intersection along origin + s * dir for s in (1e-6, max_distance].
  std::optional<Hit> intersect(const Vec3& origin, const Vec3& dir, double max_distance) const;

  const Tri& triangle(uint32_t index) const { return tris_[index]; }

 private:
  struct Node {
    Aabb box;
    int32_t left = -1, right = -1;
    uint32_t first = 0, count = 0;  // leaf range when count > 0
  };
  int32_t build(uint32_t first, uint32_t count, int depth);

  std::vector<Tri> tris_;
  std::vector<uint32_t> prim_of_tri_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace kpseg
