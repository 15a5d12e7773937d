#include <doctest.h>

#include <map>

#include "kpseg/rosette.hpp"
#include "kpseg/scene.hpp"

using namespace kpseg;

namespace {

SceneSpec road_only_spec() {
  SceneSpec spec;
  spec.extent_x = 12.0;
  spec.extent_y = 6.0;
  spec.density = 750.0;
  spec.terrain.amplitude = 0.0;  // flat, and no terrain points
  spec.roads.push_back({{-5.0, 0.0}, {5.0, 0.0}, 4.0});
  spec.cars.count = 0;
  spec.poles.count = 0;
  spec.guardrail_height = 0.0;
  return spec;
}

}  // namespace

TEST_CASE("generate_scene: road strip point count and labels") {
  SceneSpec spec = road_only_spec();
  Scene scene = generate_scene(spec, 3);
  // terrain is still sampled (amplitude 0 keeps it flat); restrict to roads
  int64_t road_points = 0;
  for (size_t i = 0; i < scene.cloud.size(); ++i)
    if (scene.cloud.labels[i] == static_cast<uint8_t>(ClassId::road)) {
      ++road_points;
      CHECK(std::abs(scene.cloud.coords[i].z) < 0.05);  // flat strip near z = 0
    }
  // 10 m x 4 m at 750 pts/m^2 = 30000 expected, +-5%
  CHECK(road_points > 28500);
  CHECK(road_points < 31500);
}

TEST_CASE("generate_scene: pole points stay within the cylinder radius") {
  SceneSpec spec = road_only_spec();
  spec.poles.count = 5;
  Scene scene = generate_scene(spec, 11);
  REQUIRE(scene.poles.size() == 5);

  for (size_t i = 0; i < scene.cloud.size(); ++i) {
    if (scene.cloud.labels[i] != static_cast<uint8_t>(ClassId::pole)) continue;
    const Vec3& p = scene.cloud.coords[i];
    double best = 1e9;
    for (const PoleInfo& pole : scene.poles) {
      double dx = p.x - pole.base.x, dy = p.y - pole.base.y;
      best = std::min(best, std::sqrt(dx * dx + dy * dy) - pole.radius);
    }
    CHECK(best < 1e-9);  // on or inside some pole's faceted cylinder
  }
}

TEST_CASE("generate_scene: stacked decks produce two separated z-clusters") {
  SceneSpec spec = road_only_spec();
  spec.extent_x = spec.extent_y = 20.0;
  spec.density = 200.0;
  spec.bridges.push_back({{{-8, 0}, {8, 0}}, 6.0, 6.0, 10.0});
  spec.bridges.push_back({{{-8, 0.5}, {8, 0.5}}, 6.0, 12.0, 10.0});
  spec.guardrail_height = 0.0;
  Scene scene = generate_scene(spec, 4);

  int64_t low = 0, high = 0, between = 0;
  for (size_t i = 0; i < scene.cloud.size(); ++i) {
    if (scene.cloud.labels[i] != static_cast<uint8_t>(ClassId::bridge)) continue;
    double z = scene.cloud.coords[i].z;
    if (z > 4.0 && z <= 7.0) ++low;
    else if (z > 10.0) ++high;
    else if (z > 7.0 && z <= 10.0) ++between;
  }
  CHECK(low > 1000);
  CHECK(high > 1000);
  // piers connect decks to the ground, so "between" holds only pier points
  CHECK(between < (low + high) / 4);
}

TEST_CASE("generate_scene: deterministic given spec and seed") {
  SceneSpec spec = make_interchange_spec(25.0, 60.0, 5);
  Scene a = generate_scene(spec, 99);
  Scene b = generate_scene(spec, 99);
  CHECK(a.cloud == b.cloud);
  Scene c = generate_scene(spec, 100);
  CHECK(a.cloud.size() != c.cloud.size());  // different seed, different draw
}

TEST_CASE("generate_scene: the default interchange covers all six classes") {
  SceneSpec spec = make_interchange_spec(30.0, 40.0, 1);
  Scene scene = generate_scene(spec, 1);
  std::map<int, int> hist;
  for (uint8_t l : scene.cloud.labels) ++hist[l];
  for (int c = 0; c < 6; ++c) {
    INFO("class " << c);
    CHECK(hist[c] > 0);
  }
}

TEST_CASE("generate_scene: degenerate spec rejected") {
  SceneSpec spec;
  spec.extent_x = 0.0;
  CHECK_THROWS_AS(generate_scene(spec, 0), ArgumentError);
}

TEST_CASE("scene spec: JSON round trip") {
  SceneSpec spec = make_interchange_spec(20.0, 100.0, 3);
  SceneSpec back = scene_spec_from_json(scene_spec_to_json(spec));
  CHECK(back.extent_x == spec.extent_x);
  CHECK(back.density == spec.density);
  CHECK(back.bridges.size() == spec.bridges.size());
  CHECK(back.bridges[0].elevation == spec.bridges[0].elevation);
  CHECK(back.poles.count == spec.poles.count);
  CHECK_THROWS_AS(scene_spec_from_json("{\"nope\": 1}"), ParseError);
}

TEST_CASE("rosette_directions: boresight crossing, rate contract, envelope") {
  RosetteConfig cfg;
  Vec3 at0 = rosette_direction(cfg, 0.0);  // sin(0) = 0: exactly boresight
  CHECK(at0 == Vec3{0, 0, 1});

  auto dirs = rosette_directions(cfg, 0.0, 0.1);
  CHECK(dirs.size() == 10000);

  double theta_max = cfg.fov_deg * M_PI / 360.0;
  double max_offset = 0.0;
  for (const auto& d : rosette_directions(cfg, 0.0, 1.0)) {
    double offset = std::acos(std::clamp(d.dir.z, -1.0, 1.0));
    CHECK(offset <= theta_max + 1e-9);
    max_offset = std::max(max_offset, offset);
  }
  CHECK(std::abs(max_offset - theta_max) < 1e-6);
}

TEST_CASE("fov_coverage: zero at t=0, monotone, calibrated defaults hit the bands") {
  RosetteConfig cfg;
  CHECK(fov_coverage(cfg, 0.0, 64) == 0.0);

  double c01 = fov_coverage(cfg, 0.1, 64);
  double c10 = fov_coverage(cfg, 1.0, 64);
  CHECK(c01 >= 0.15);
  CHECK(c01 <= 0.25);
  CHECK(c10 >= 0.88);

  double prev = 0.0;
  for (double t : {0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6}) {
    double c = fov_coverage(cfg, t, 64);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("rosette config: near-rational frequency pairs rejected") {
  RosetteConfig cfg;
  cfg.f_petal = 40.0;
  cfg.f_spin = 60.0;  // ratio 3/2
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("rosette_scan: plane range noise model, occlusion, empty scene") {
  // single large wall facing the sensor at 10 m
  Scene scene;
  Primitive wall{ClassId::bridge, {}};
  wall.tris.push_back({{10, -50, -50}, {10, 50, -50}, {10, 50, 50}});
  wall.tris.push_back({{10, -50, -50}, {10, 50, 50}, {10, -50, 50}});
  scene.primitives.push_back(wall);

  SensorPose pose;
  pose.position = {0, 0, 0};
  pose.boresight = {1, 0, 0};
  pose.up_hint = {0, 0, 1};
  RosetteConfig cfg;

  LabeledCloud scan = rosette_scan(scene, pose, cfg, 0.1, 3);
  CHECK(scan.size() == 10000);  // every ray hits the wall
  for (size_t i = 0; i < scan.size(); ++i) {
    double range = norm(scan.coords[i]);
    double along = scan.coords[i].x;
    // geometric range to the plane at offset theta is 10 / cos(theta) <= 10.6
    CHECK(along > 10.0 - 5.0 * cfg.range_noise_sigma - 1e-9);
    CHECK(along < 10.0 + 5.0 * cfg.range_noise_sigma + 1e-9);
    CHECK(range < 11.0);
    CHECK(scan.labels[i] == static_cast<uint8_t>(ClassId::bridge));
  }

  // a nearer plane fully covering the FOV occludes the far one
  Primitive near_wall{ClassId::road, {}};
  near_wall.tris.push_back({{5, -50, -50}, {5, 50, -50}, {5, 50, 50}});
  near_wall.tris.push_back({{5, -50, -50}, {5, 50, 50}, {5, -50, 50}});
  scene.primitives.insert(scene.primitives.begin(), near_wall);
  LabeledCloud occluded = rosette_scan(scene, pose, cfg, 0.05, 4);
  for (size_t i = 0; i < occluded.size(); ++i)
    CHECK(occluded.labels[i] == static_cast<uint8_t>(ClassId::road));

  Scene empty;
  CHECK(rosette_scan(empty, pose, cfg, 0.01, 5).size() == 0);
}

TEST_CASE("rosette_scan: deterministic given seed") {
  SceneSpec spec = road_only_spec();
  Scene scene = generate_scene(spec, 1);
  SensorPose pose;
  pose.position = {0, 0, 15};
  pose.boresight = {0.1, 0, -1};
  RosetteConfig cfg;
  LabeledCloud a = rosette_scan(scene, pose, cfg, 0.05, 42);
  LabeledCloud b = rosette_scan(scene, pose, cfg, 0.05, 42);
  CHECK(a == b);
  CHECK(a.size() > 1000);
}
