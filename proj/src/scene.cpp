#include "kpseg/scene.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "kpseg/errors.hpp"
#include "kpseg/rng.hpp"

namespace kpseg {

namespace {

using nlohmann::json;

uint64_t splitmix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Value noise over a unit lattice, C1 via smoothstep weights. Two macro
// octaves shape the terrain; a fixed fine-scale octave adds the surface
// roughness of vegetation so natural ground is locally rough at every
// convolution scale, unlike graded road and deck surfaces.
class Heightfield {
 public:
  Heightfield(const TerrainSpec& spec, uint64_t seed) : spec_(spec), seed_(seed) {}

  // macro shape: what road grading flattens
  double macro(double x, double y) const {
    if (spec_.amplitude == 0.0) return 0.0;
    double v = octave(x * spec_.roughness, y * spec_.roughness, 1);
    v += 0.5 * octave(x * spec_.roughness * 2.0, y * spec_.roughness * 2.0, 2);
    return spec_.amplitude * v / 1.5;
  }

  // vegetation-scale roughness: survives grading, absent on pavement
  double micro(double x, double y) const {
    if (spec_.amplitude == 0.0) return 0.0;
    return 0.15 * octave(x * 1.0, y * 1.0, 3) + 0.10 * octave(x * 1.9, y * 1.9, 4);
  }

  double operator()(double x, double y) const { return macro(x, y) + micro(x, y); }

 private:
  double lattice(int64_t ix, int64_t iy, uint64_t octave_salt) const {
    uint64_t h = splitmix(seed_ ^ splitmix(static_cast<uint64_t>(ix) * 0x8DA6B343ull ^
                                           static_cast<uint64_t>(iy) * 0xD8163841ull ^
                                           octave_salt * 0xCB1AB31Full));
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
  }

  double octave(double x, double y, uint64_t salt) const {
    double fx = std::floor(x), fy = std::floor(y);
    int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
    double tx = x - fx, ty = y - fy;
    double sx = tx * tx * (3.0 - 2.0 * tx);
    double sy = ty * ty * (3.0 - 2.0 * ty);
    double v00 = lattice(ix, iy, salt), v10 = lattice(ix + 1, iy, salt);
    double v01 = lattice(ix, iy + 1, salt), v11 = lattice(ix + 1, iy + 1, salt);
    double a = v00 + (v10 - v00) * sx;
    double b = v01 + (v11 - v01) * sx;
    return a + (b - a) * sy;
  }

  TerrainSpec spec_;
  uint64_t seed_;
};

// pavement rides on a low embankment above the graded corridor, giving road
// edges a curb-like step
constexpr double kRoadLift = 0.3;

double point_segment_distance_2d(double x, double y, const std::array<double, 2>& a,
                                 const std::array<double, 2>& b) {
  double abx = b[0] - a[0], aby = b[1] - a[1];
  double apx = x - a[0], apy = y - a[1];
  double len2 = abx * abx + aby * aby;
  double t = len2 > 0.0 ? std::clamp((apx * abx + apy * aby) / len2, 0.0, 1.0) : 0.0;
  double dx = apx - t * abx, dy = apy - t * aby;
  return std::sqrt(dx * dx + dy * dy);
}

// Terrain graded around the roads: inside a road corridor the macro ground
// shape blends to the road's constant level, the way real embankments are
// cut. Pavement sits exactly at that level; natural ground keeps its
// fine-scale roughness even where graded.
class GroundModel {
 public:
  GroundModel(const Heightfield& base, const std::vector<RoadSpec>& roads) : base_(base) {
    for (const RoadSpec& r : roads) {
      double mx = (r.start[0] + r.end[0]) / 2.0, my = (r.start[1] + r.end[1]) / 2.0;
      corridors_.push_back({r.start, r.end, r.width / 2.0, base.macro(mx, my)});
    }
  }

  // graded macro level; constant inside a road footprint
  double operator()(double x, double y) const {
    double h = base_.macro(x, y);
    for (const Corridor& c : corridors_) {
      double d = point_segment_distance_2d(x, y, c.a, c.b);
      double t = std::clamp((d - c.half_width) / 1.5, 0.0, 1.0);
      double s = t * t * (3.0 - 2.0 * t);
      h = c.level + (h - c.level) * s;
    }
    return h;
  }

  double natural_surface(double x, double y) const {
    return (*this)(x, y) + base_.micro(x, y);
  }

  bool in_road_footprint(double x, double y) const {
    for (const Corridor& c : corridors_)
      if (point_segment_distance_2d(x, y, c.a, c.b) <= c.half_width + 0.05) return true;
    return false;
  }

 private:
  struct Corridor {
    std::array<double, 2> a, b;
    double half_width;
    double level;
  };
  Heightfield base_;
  std::vector<Corridor> corridors_;
};

void add_quad(std::vector<Tri>& tris, const Vec3& p0, const Vec3& p1, const Vec3& p2,
              const Vec3& p3) {
  // p0..p3 counter-clockwise
  tris.push_back({p0, p1, p2});
  tris.push_back({p0, p2, p3});
}

// Axis-aligned-in-local-frame box from center path; u = along, v = across.
void add_box(std::vector<Tri>& tris, const Vec3& base_center, const Vec3& u_dir, double len,
             double wid, double hei, bool with_bottom = true) {
  Vec3 u = normalized(u_dir) * (len * 0.5);
  Vec3 v = normalized(cross(Vec3{0, 0, 1}, u_dir)) * (wid * 0.5);
  Vec3 w{0, 0, hei};
  Vec3 c = base_center;
  Vec3 b00 = c - u - v, b10 = c + u - v, b11 = c + u + v, b01 = c - u + v;
  Vec3 t00 = b00 + w, t10 = b10 + w, t11 = b11 + w, t01 = b01 + w;
  add_quad(tris, t00, t10, t11, t01);              // top
  if (with_bottom) add_quad(tris, b01, b11, b10, b00);  // bottom
  add_quad(tris, b00, b10, t10, t00);              // side -v
  add_quad(tris, b11, b01, t01, t11);              // side +v
  add_quad(tris, b10, b11, t11, t10);              // end +u
  add_quad(tris, b01, b00, t00, t01);              // end -u
}

struct Builder {
  const SceneSpec& spec;
  GroundModel ground;
  Scene scene;

  void add_primitive(ClassId cls, std::vector<Tri> tris) {
    scene.primitives.push_back({cls, std::move(tris)});
  }

  void terrain() {
    std::vector<Tri> tris;
    const double step = 0.5;  // resolves the vegetation-scale roughness
    double hx = spec.extent_x / 2.0, hy = spec.extent_y / 2.0;
    int nx = std::max(1, static_cast<int>(std::ceil(spec.extent_x / step)));
    int ny = std::max(1, static_cast<int>(std::ceil(spec.extent_y / step)));
    auto surf = [&](double x, double y) { return Vec3{x, y, ground.natural_surface(x, y)}; };
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) {
        double x0 = -hx + spec.extent_x * i / nx, x1 = -hx + spec.extent_x * (i + 1) / nx;
        double y0 = -hy + spec.extent_y * j / ny, y1 = -hy + spec.extent_y * (j + 1) / ny;
        add_quad(tris, surf(x0, y0), surf(x1, y0), surf(x1, y1), surf(x0, y1));
      }
    }
    add_primitive(ClassId::natural, std::move(tris));
  }

  void road(const RoadSpec& r) {
    std::vector<Tri> tris;
    Vec3 s{r.start[0], r.start[1], 0}, e{r.end[0], r.end[1], 0};
    Vec3 dir = e - s;
    double len = norm(dir);
    if (len <= 0.0) throw ArgumentError("scene: zero-length road");
    dir = dir / len;
    Vec3 across = normalized(cross(Vec3{0, 0, 1}, dir)) * (r.width / 2.0);
    int nseg = std::max(1, static_cast<int>(std::ceil(len)));
    for (int i = 0; i < nseg; ++i) {
      Vec3 a = s + dir * (len * i / nseg);
      Vec3 b = s + dir * (len * (i + 1) / nseg);
      auto lift = [&](Vec3 p) { p.z = ground(p.x, p.y) + kRoadLift; return p; };
      add_quad(tris, lift(a - across), lift(b - across), lift(b + across), lift(a + across));
    }
    add_primitive(ClassId::road, std::move(tris));
  }

  void bridge(const BridgeSpec& b) {
    if (b.polyline.size() < 2) throw ArgumentError("scene: bridge polyline needs >= 2 points");
    const double deck_thickness = 0.4;
    std::vector<Tri> deck, rails;
    for (size_t i = 0; i + 1 < b.polyline.size(); ++i) {
      Vec3 p0{b.polyline[i][0], b.polyline[i][1], 0};
      Vec3 p1{b.polyline[i + 1][0], b.polyline[i + 1][1], 0};
      Vec3 dir = p1 - p0;
      double len = norm(dir);
      if (len <= 0.0) continue;
      dir = dir / len;
      Vec3 mid = (p0 + p1) * 0.5;
      Vec3 base{mid.x, mid.y, b.elevation - deck_thickness};
      add_box(deck, base, dir, len, b.width, deck_thickness);
      // piers from the terrain to the deck underside
      int npiers = std::max(1, static_cast<int>(std::floor(len / b.pier_spacing)));
      for (int k = 0; k < npiers; ++k) {
        Vec3 at = p0 + dir * (len * (k + 0.5) / npiers);
        double ground_z = ground(at.x, at.y);
        double h = b.elevation - deck_thickness - ground_z;
        if (h <= 0.5) continue;
        add_box(deck, {at.x, at.y, ground_z}, dir, 0.8, 0.8, h);
      }
      if (spec.guardrail_height > 0.0) {
        Vec3 across = normalized(cross(Vec3{0, 0, 1}, dir)) * (b.width / 2.0 - 0.05);
        for (double side : {-1.0, 1.0}) {
          Vec3 c = mid + across * side;
          add_box(rails, {c.x, c.y, b.elevation}, dir, len, 0.08, spec.guardrail_height, false);
        }
      }
    }
    add_primitive(ClassId::bridge, std::move(deck));
    if (!rails.empty()) add_primitive(ClassId::guardrail, std::move(rails));
  }

  // Cars sit on a random carrier surface: a road (at terrain level) or a
  // bridge deck (at elevation).
  void cars(Rng& rng) {
    for (int i = 0; i < spec.cars.count; ++i) {
      double len = rng.uniform(spec.cars.length[0], spec.cars.length[1]);
      double wid = rng.uniform(spec.cars.width[0], spec.cars.width[1]);
      double hei = rng.uniform(spec.cars.height[0], spec.cars.height[1]);
      size_t n_carriers = spec.roads.size() + spec.bridges.size();
      if (n_carriers == 0) break;
      size_t c = static_cast<size_t>(rng.uniform_index(n_carriers));
      std::vector<Tri> tris;
      if (c < spec.roads.size()) {
        const RoadSpec& r = spec.roads[c];
        Vec3 s{r.start[0], r.start[1], 0}, e{r.end[0], r.end[1], 0};
        Vec3 dir = normalized(e - s);
        double t = rng.uniform(0.1, 0.9);
        double lat = rng.uniform(-0.5, 0.5) * (r.width - wid - 0.5);
        Vec3 at = s + (e - s) * t + cross(Vec3{0, 0, 1}, dir) * lat;
        at.z = ground(at.x, at.y) + kRoadLift;
        add_box(tris, at, dir, len, wid, hei, false);
      } else {
        const BridgeSpec& b = spec.bridges[c - spec.roads.size()];
        size_t seg = static_cast<size_t>(rng.uniform_index(b.polyline.size() - 1));
        Vec3 p0{b.polyline[seg][0], b.polyline[seg][1], 0};
        Vec3 p1{b.polyline[seg + 1][0], b.polyline[seg + 1][1], 0};
        Vec3 dir = normalized(p1 - p0);
        double t = rng.uniform(0.1, 0.9);
        double lat = rng.uniform(-0.5, 0.5) * (b.width - wid - 1.0);
        Vec3 at = p0 + (p1 - p0) * t + cross(Vec3{0, 0, 1}, dir) * lat;
        at.z = b.elevation;
        add_box(tris, at, dir, len, wid, hei, false);
      }
      add_primitive(ClassId::car, std::move(tris));
    }
  }

  // Lamp poles: faceted cylinders along the roadsides (or scattered over the
  // terrain when the scene has no roads). Decks carry guardrails instead.
  void poles(Rng& rng) {
    const int facets = 16;
    for (int i = 0; i < spec.poles.count; ++i) {
      double h = rng.uniform(spec.poles.height[0], spec.poles.height[1]);
      double r = rng.uniform(spec.poles.radius[0], spec.poles.radius[1]);
      Vec3 base;
      if (spec.roads.empty()) {
        base = {rng.uniform(-spec.extent_x / 2, spec.extent_x / 2),
                rng.uniform(-spec.extent_y / 2, spec.extent_y / 2), 0};
        base.z = ground(base.x, base.y);
      } else {
        const RoadSpec& rd = spec.roads[rng.uniform_index(spec.roads.size())];
        Vec3 s{rd.start[0], rd.start[1], 0}, e{rd.end[0], rd.end[1], 0};
        Vec3 dir = normalized(e - s);
        double t = rng.uniform(0.1, 0.9);
        double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        base = s + (e - s) * t + cross(Vec3{0, 0, 1}, dir) * (side * (rd.width / 2 + 0.8));
        base.z = ground(base.x, base.y);
      }
      std::vector<Tri> tris;
      for (int f = 0; f < facets; ++f) {
        double a0 = 2.0 * M_PI * f / facets, a1 = 2.0 * M_PI * (f + 1) / facets;
        Vec3 r0{r * std::cos(a0), r * std::sin(a0), 0};
        Vec3 r1{r * std::cos(a1), r * std::sin(a1), 0};
        Vec3 up{0, 0, h};
        add_quad(tris, base + r0, base + r1, base + r1 + up, base + r0 + up);
        tris.push_back({base + up, base + r0 + up, base + r1 + up});  // cap
      }
      add_primitive(ClassId::pole, std::move(tris));
      scene.poles.push_back({base, h, r});
    }
  }
};

void sample_surfaces(Scene& scene, double density, Rng& rng, const GroundModel& ground) {
  LabeledCloud& cloud = scene.cloud;
  for (const Primitive& prim : scene.primitives) {
    bool is_ground = prim.class_id == ClassId::natural;
    for (const Tri& tri : prim.tris) {
      double expected = tri.area() * density;
      auto n = static_cast<int64_t>(std::floor(expected));
      if (rng.uniform() < expected - static_cast<double>(n)) ++n;
      if (n == 0) continue;
      Vec3 normal = tri.normal();
      double lambert = std::abs(normal.z);
      for (int64_t i = 0; i < n; ++i) {
        double r1 = std::sqrt(rng.uniform());
        double r2 = rng.uniform();
        Vec3 p = tri.a * (1.0 - r1) + tri.b * (r1 * (1.0 - r2)) + tri.c * (r1 * r2);
        // the pavement replaces the ground surface inside road footprints
        if (is_ground && ground.in_road_footprint(p.x, p.y)) continue;
        cloud.coords.push_back(p);
        cloud.intensity.push_back(lambert);
        cloud.labels.push_back(static_cast<uint8_t>(prim.class_id));
      }
    }
  }
}

}  // namespace

void SceneSpec::validate() const {
  if (extent_x <= 0.0 || extent_y <= 0.0) throw ArgumentError("scene spec: extent must be > 0");
  if (density <= 0.0) throw ArgumentError("scene spec: density must be > 0");
  if (terrain.amplitude < 0.0) throw ArgumentError("scene spec: terrain amplitude must be >= 0");
  if (guardrail_height < 0.0) throw ArgumentError("scene spec: guardrail height must be >= 0");
  for (const RoadSpec& r : roads)
    if (r.width <= 0.0) throw ArgumentError("scene spec: road width must be > 0");
  for (const BridgeSpec& b : bridges) {
    if (b.width <= 0.0 || b.pier_spacing <= 0.0)
      throw ArgumentError("scene spec: bridge dimensions must be > 0");
    if (b.polyline.size() < 2) throw ArgumentError("scene spec: bridge polyline needs >= 2 points");
  }
  if (cars.count < 0 || poles.count < 0) throw ArgumentError("scene spec: counts must be >= 0");
}

Scene generate_scene(const SceneSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Heightfield base(spec.terrain, splitmix(seed));
  Builder builder{spec, GroundModel(base, spec.roads), {}};
  builder.terrain();
  for (const RoadSpec& r : spec.roads) builder.road(r);
  for (const BridgeSpec& b : spec.bridges) builder.bridge(b);
  builder.cars(rng);
  builder.poles(rng);
  sample_surfaces(builder.scene, spec.density, rng, builder.ground);
  builder.scene.cloud.validate();
  return builder.scene;
}

SceneSpec make_interchange_spec(double extent, double density, uint64_t layout_seed) {
  Rng rng(layout_seed);
  SceneSpec spec;
  spec.extent_x = extent;
  spec.extent_y = extent;
  spec.density = density;
  spec.terrain = {rng.uniform(1.0, 2.5), rng.uniform(0.05, 0.09)};

  double h = extent / 2.0;
  // two decks crossing near the middle at different elevations
  double e1 = rng.uniform(5.5, 7.5), e2 = e1 + rng.uniform(4.5, 6.5);
  double skew = rng.uniform(-0.25, 0.25) * extent;
  spec.bridges.push_back({{{-h, rng.uniform(-0.15, 0.15) * extent},
                           {0.0, rng.uniform(-0.1, 0.1) * extent},
                           {h, rng.uniform(-0.15, 0.15) * extent}},
                          rng.uniform(6.5, 8.5), e1, rng.uniform(11.0, 16.0)});
  spec.bridges.push_back({{{skew, -h}, {0.0, 0.0}, {-skew, h}},
                          rng.uniform(6.5, 8.5), e2, rng.uniform(11.0, 16.0)});

  // ground roads, one per axis, offset from the decks
  double off1 = rng.uniform(0.2, 0.35) * extent * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  double off2 = rng.uniform(0.2, 0.35) * extent * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  spec.roads.push_back({{-h, off1}, {h, off1}, rng.uniform(5.0, 7.0)});
  spec.roads.push_back({{off2, -h}, {off2, h}, rng.uniform(5.0, 7.0)});

  spec.cars.count = 4 + static_cast<int>(rng.uniform_index(5));
  spec.poles.count = 6 + static_cast<int>(rng.uniform_index(5));
  spec.guardrail_height = rng.uniform(0.9, 1.2);
  return spec;
}

SceneSpec scene_spec_from_json(const std::string& text) {
  json j = json::parse(text);
  SceneSpec spec;
  spec.roads.clear();
  spec.bridges.clear();
  for (auto& [key, value] : j.items()) {
    if (key == "extent") {
      spec.extent_x = value.at(0).get<double>();
      spec.extent_y = value.at(1).get<double>();
    } else if (key == "density") {
      spec.density = value.get<double>();
    } else if (key == "terrain") {
      spec.terrain.amplitude = value.at("amplitude").get<double>();
      spec.terrain.roughness = value.at("roughness").get<double>();
    } else if (key == "roads") {
      for (auto& r : value) {
        RoadSpec road;
        road.start = {r.at("start").at(0).get<double>(), r.at("start").at(1).get<double>()};
        road.end = {r.at("end").at(0).get<double>(), r.at("end").at(1).get<double>()};
        road.width = r.at("width").get<double>();
        spec.roads.push_back(road);
      }
    } else if (key == "bridges") {
      for (auto& b : value) {
        BridgeSpec bridge;
        for (auto& p : b.at("polyline"))
          bridge.polyline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        bridge.width = b.at("width").get<double>();
        bridge.elevation = b.at("elevation").get<double>();
        bridge.pier_spacing = b.value("pier_spacing", 15.0);
        spec.bridges.push_back(bridge);
      }
    } else if (key == "cars") {
      spec.cars.count = value.at("count").get<int>();
      if (value.contains("length")) spec.cars.length = {value["length"][0], value["length"][1]};
      if (value.contains("width")) spec.cars.width = {value["width"][0], value["width"][1]};
      if (value.contains("height")) spec.cars.height = {value["height"][0], value["height"][1]};
    } else if (key == "poles") {
      spec.poles.count = value.at("count").get<int>();
      if (value.contains("height")) spec.poles.height = {value["height"][0], value["height"][1]};
      if (value.contains("radius")) spec.poles.radius = {value["radius"][0], value["radius"][1]};
    } else if (key == "guardrail_height") {
      spec.guardrail_height = value.get<double>();
    } else {
      throw ParseError("scene spec: unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string scene_spec_to_json(const SceneSpec& spec) {
  json j;
  j["extent"] = {spec.extent_x, spec.extent_y};
  j["density"] = spec.density;
  j["terrain"] = {{"amplitude", spec.terrain.amplitude}, {"roughness", spec.terrain.roughness}};
  json roads = json::array();
  for (const RoadSpec& r : spec.roads)
    roads.push_back({{"start", r.start}, {"end", r.end}, {"width", r.width}});
  j["roads"] = roads;
  json bridges = json::array();
  for (const BridgeSpec& b : spec.bridges) {
    json poly = json::array();
    for (auto& p : b.polyline) poly.push_back({p[0], p[1]});
    bridges.push_back({{"polyline", poly},
                       {"width", b.width},
                       {"elevation", b.elevation},
                       {"pier_spacing", b.pier_spacing}});
  }
  j["bridges"] = bridges;
  j["cars"] = {{"count", spec.cars.count},
               {"length", spec.cars.length},
               {"width", spec.cars.width},
               {"height", spec.cars.height}};
  j["poles"] = {{"count", spec.poles.count},
                {"height", spec.poles.height},
                {"radius", spec.poles.radius}};
  j["guardrail_height"] = spec.guardrail_height;
  return j.dump(2);
}

// ---- BVH ---------------------------------------------------------------------

TriangleBvh::TriangleBvh(const std::vector<Primitive>& primitives) {
  for (uint32_t p = 0; p < primitives.size(); ++p) {
    for (const Tri& t : primitives[p].tris) {
      tris_.push_back(t);
      prim_of_tri_.push_back(p);
    }
  }
  order_.resize(tris_.size());
  for (uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!tris_.empty()) build(0, static_cast<uint32_t>(order_.size()), 0);
}

int32_t TriangleBvh::build(uint32_t first, uint32_t count, int depth) {
  Node node;
  for (uint32_t i = first; i < first + count; ++i) {
    const Tri& t = tris_[order_[i]];
    node.box.expand(t.a);
    node.box.expand(t.b);
    node.box.expand(t.c);
  }
  int32_t index = static_cast<int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (count <= 4 || depth > 40) {
    nodes_[index].first = first;
    nodes_[index].count = count;
    return index;
  }
  Vec3 span = node.box.hi - node.box.lo;
  int axis = span.x >= span.y && span.x >= span.z ? 0 : (span.y >= span.z ? 1 : 2);
  std::sort(order_.begin() + first, order_.begin() + first + count,
            [&](uint32_t a, uint32_t b) {
              auto key = [&](uint32_t i) {
                const Tri& t = tris_[i];
                return (t.a[axis] + t.b[axis] + t.c[axis]) / 3.0;
              };
              double ka = key(a), kb = key(b);
              return ka != kb ? ka < kb : a < b;
            });
  uint32_t half = count / 2;
  int32_t left = build(first, half, depth + 1);
  int32_t right = build(first + half, count - half, depth + 1);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

namespace {

bool ray_box(const Vec3& origin, const Vec3& inv_dir, const Aabb& box, double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double lo = (box.lo[a] - origin[a]) * inv_dir[a];
    double hi = (box.hi[a] - origin[a]) * inv_dir[a];
    if (inv_dir[a] < 0.0) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
    if (t0 > t1) return false;
  }
  return true;
}

// Moller-Trumbore
bool ray_tri(const Vec3& origin, const Vec3& dir, const Tri& tri, double& t_out) {
  const double eps = 1e-12;
  Vec3 e1 = tri.b - tri.a, e2 = tri.c - tri.a;
  Vec3 pvec = cross(dir, e2);
  double det = dot(e1, pvec);
  if (std::abs(det) < eps) return false;
  double inv_det = 1.0 / det;
  Vec3 tvec = origin - tri.a;
  double u = dot(tvec, pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return false;
  Vec3 qvec = cross(tvec, e1);
  double v = dot(dir, qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return false;
  double t = dot(e2, qvec) * inv_det;
  if (t <= 1e-6) return false;
  t_out = t;
  return true;
}

}  // namespace

std::optional<TriangleBvh::Hit> TriangleBvh::intersect(const Vec3& origin, const Vec3& dir,
                                                       double max_distance) const {
  if (nodes_.empty()) return std::nullopt;
  Vec3 inv_dir{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
  Hit best{max_distance, 0, 0};
  bool found = false;
  std::vector<int32_t> stack{0};
  while (!stack.empty()) {
    int32_t ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[ni];
    if (!ray_box(origin, inv_dir, node.box, best.distance)) continue;
    if (node.count > 0) {
      for (uint32_t i = node.first; i < node.first + node.count; ++i) {
        uint32_t ti = order_[i];
        double t;
        if (ray_tri(origin, dir, tris_[ti], t) && t <= best.distance) {
          // strict improvement keeps the nearest hit; ties go to the first
          // triangle in flattened order for determinism
          if (t < best.distance || !found || ti < best.triangle) {
            best = {t, prim_of_tri_[ti], ti};
            found = true;
          }
        }
      }
    } else {
      if (node.left >= 0) stack.push_back(node.left);
      if (node.right >= 0) stack.push_back(node.right);
    }
  }
  if (!found) return std::nullopt;
  return best;
}

}  // namespace kpseg
