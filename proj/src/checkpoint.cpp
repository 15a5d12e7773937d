#include "kpseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "kpseg/errors.hpp"

namespace kpseg {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'K', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  uint64_t v = 0;
  std::memcpy(&v, &value, sizeof(T));
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw ParseError("checkpoint: truncated file");
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  T out;
  std::memcpy(&out, &v, sizeof(T));
  return out;
}

void write_string(std::ostream& os, const std::string& s) {
  write_le<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  uint32_t n = read_le<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw ParseError("checkpoint: truncated string");
  return s;
}

void write_tensor(std::ostream& os, const std::string& name, const std::vector<int64_t>& dims,
                  const double* data, int64_t count) {
  write_string(os, name);
  write_le<uint32_t>(os, static_cast<uint32_t>(dims.size()));
  for (int64_t d : dims) write_le<uint64_t>(os, static_cast<uint64_t>(d));
  for (int64_t i = 0; i < count; ++i) write_le<double>(os, data[i]);
}

struct TensorRecord {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<double> data;
};

TensorRecord read_tensor(std::istream& is) {
  TensorRecord r;
  r.name = read_string(is);
  uint32_t rank = read_le<uint32_t>(is);
  int64_t count = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    int64_t d = static_cast<int64_t>(read_le<uint64_t>(is));
    r.dims.push_back(d);
    count *= d;
  }
  r.data.resize(count);
  for (int64_t i = 0; i < count; ++i) r.data[i] = read_le<double>(is);
  return r;
}

}  // namespace

std::string network_config_to_json(const NetworkConfig& cfg) {
  json j;
  j["num_layers"] = cfg.num_layers;
  j["radii"] = cfg.radii;
  j["cell_sizes"] = cfg.cell_sizes;
  j["neighbor_radius_mult"] = cfg.neighbor_radius_mult;
  j["stack_depth"] = cfg.stack_depth;
  j["channels"] = cfg.channels;
  j["num_classes"] = cfg.num_classes;
  j["sphere_radius"] = cfg.sphere_radius;
  j["batch_spheres"] = cfg.batch_spheres;
  j["use_intensity"] = cfg.use_intensity;
  j["kernel_points"] = cfg.kernel_points;
  j["influence_ratio"] = cfg.influence_ratio;
  j["leaky_slope"] = cfg.leaky_slope;
  j["bn_momentum"] = cfg.bn_momentum;
  j["bn_epsilon"] = cfg.bn_epsilon;
  j["max_neighbors"] = cfg.max_neighbors;
  j["kernel_seed"] = cfg.kernel_seed;
  return j.dump();  // nlohmann objects are key-sorted, so this is canonical
}

NetworkConfig network_config_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  NetworkConfig cfg;
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.radii = j.at("radii").get<std::vector<double>>();
  cfg.cell_sizes = j.at("cell_sizes").get<std::vector<double>>();
  cfg.neighbor_radius_mult = j.at("neighbor_radius_mult").get<double>();
  cfg.stack_depth = j.at("stack_depth").get<int>();
  cfg.channels = j.at("channels").get<std::vector<int>>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.sphere_radius = j.at("sphere_radius").get<double>();
  cfg.batch_spheres = j.at("batch_spheres").get<int>();
  cfg.use_intensity = j.at("use_intensity").get<bool>();
  cfg.kernel_points = j.at("kernel_points").get<int>();
  cfg.influence_ratio = j.at("influence_ratio").get<double>();
  cfg.leaky_slope = j.at("leaky_slope").get<double>();
  cfg.bn_momentum = j.at("bn_momentum").get<double>();
  cfg.bn_epsilon = j.at("bn_epsilon").get<double>();
  cfg.max_neighbors = j.at("max_neighbors").get<uint32_t>();
  cfg.kernel_seed = j.at("kernel_seed").get<uint64_t>();
  return cfg;
}

void save_checkpoint(Network& net, const std::string& path) {
  std::ofstream fs(path, std::ios::binary);
  if (!fs) throw IoError("cannot open " + path + " for writing");
  fs.write(kMagic, 4);
  write_le<uint32_t>(fs, kVersion);

  std::string cfg_json = network_config_to_json(net.config());
  write_le<uint64_t>(fs, cfg_json.size());
  fs.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

  const auto& disps = net.dispositions();
  write_le<uint32_t>(fs, static_cast<uint32_t>(disps.size()));
  for (const KernelDisposition& kd : disps) {
    write_le<uint32_t>(fs, static_cast<uint32_t>(kd.points.size()));
    write_le<double>(fs, kd.radius);
    write_le<double>(fs, kd.influence);
    for (const Vec3& p : kd.points) {
      write_le<double>(fs, p.x);
      write_le<double>(fs, p.y);
      write_le<double>(fs, p.z);
    }
  }

  write_le<uint64_t>(fs, net.step_counter);
  std::string rng = net.train_rng.serialize();
  write_le<uint64_t>(fs, rng.size());
  fs.write(rng.data(), static_cast<std::streamsize>(rng.size()));

  auto states = net.state_records();
  write_le<uint32_t>(fs, static_cast<uint32_t>(net.params().count() * 2 + states.size()));
  for (const auto& p : net.params().all()) {
    write_tensor(fs, p->name, p->dims, p->value.data(), p->size());
    write_tensor(fs, p->name + "#momentum", p->dims, p->momentum.data(), p->size());
  }
  for (auto& [name, vec] : states)
    write_tensor(fs, name, {vec->size()}, vec->data(), vec->size());

  if (!fs) throw IoError("write failed: " + path);
}

namespace {

void load_records_into(Network& net, std::istream& is) {
  uint32_t count = read_le<uint32_t>(is);
  auto states = net.state_records();
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord r = read_tensor(is);
    bool momentum = false;
    std::string base = r.name;
    if (auto pos = base.find("#momentum"); pos != std::string::npos) {
      momentum = true;
      base = base.substr(0, pos);
    }
    if (Parameter* p = net.params().find(base)) {
      if (static_cast<int64_t>(r.data.size()) != p->size())
        throw DataError("checkpoint: size mismatch for tensor '" + r.name + "'");
      Mat& dst = momentum ? p->momentum : p->value;
      std::memcpy(dst.data(), r.data.data(), r.data.size() * sizeof(double));
      continue;
    }
    bool matched = false;
    for (auto& [name, vec] : states) {
      if (name != r.name) continue;
      if (static_cast<int64_t>(r.data.size()) != vec->size())
        throw DataError("checkpoint: size mismatch for state '" + r.name + "'");
      std::memcpy(vec->data(), r.data.data(), r.data.size() * sizeof(double));
      matched = true;
      break;
    }
    if (!matched) throw DataError("checkpoint: unknown tensor '" + r.name + "'");
  }
}

void check_config_match(const NetworkConfig& have, const NetworkConfig& want) {
  auto fail = [](const std::string& field) {
    throw DataError("checkpoint: config mismatch in field '" + field + "'");
  };
  if (have.num_layers != want.num_layers) fail("num_layers");
  if (have.radii != want.radii) fail("radii");
  if (have.cell_sizes != want.cell_sizes) fail("cell_sizes");
  if (have.neighbor_radius_mult != want.neighbor_radius_mult) fail("neighbor_radius_mult");
  if (have.stack_depth != want.stack_depth) fail("stack_depth");
  if (have.channels != want.channels) fail("channels");
  if (have.num_classes != want.num_classes) fail("num_classes");
  if (have.sphere_radius != want.sphere_radius) fail("sphere_radius");
  if (have.batch_spheres != want.batch_spheres) fail("batch_spheres");
  if (have.use_intensity != want.use_intensity) fail("use_intensity");
  if (have.kernel_points != want.kernel_points) fail("kernel_points");
  if (have.influence_ratio != want.influence_ratio) fail("influence_ratio");
  if (have.leaky_slope != want.leaky_slope) fail("leaky_slope");
  if (have.bn_momentum != want.bn_momentum) fail("bn_momentum");
  if (have.bn_epsilon != want.bn_epsilon) fail("bn_epsilon");
  if (have.max_neighbors != want.max_neighbors) fail("max_neighbors");
  if (have.kernel_seed != want.kernel_seed) fail("kernel_seed");
}

struct CheckpointHeader {
  NetworkConfig config;
  std::vector<KernelDisposition> dispositions;
  uint64_t step_counter = 0;
  std::string rng_state;
};

CheckpointHeader read_header(std::istream& fs, const std::string& path) {
  char magic[4];
  fs.read(magic, 4);
  if (!fs || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": bad magic, not a KPCK checkpoint");
  uint32_t version = read_le<uint32_t>(fs);
  if (version != kVersion)
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));

  CheckpointHeader h;
  uint64_t cfg_len = read_le<uint64_t>(fs);
  std::string cfg_json(cfg_len, '\0');
  fs.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!fs) throw ParseError(path + ": truncated config blob");
  h.config = network_config_from_json(cfg_json);

  uint32_t n_disp = read_le<uint32_t>(fs);
  for (uint32_t i = 0; i < n_disp; ++i) {
    KernelDisposition kd;
    uint32_t k = read_le<uint32_t>(fs);
    kd.radius = read_le<double>(fs);
    kd.influence = read_le<double>(fs);
    kd.points.resize(k);
    for (uint32_t j = 0; j < k; ++j) {
      kd.points[j].x = read_le<double>(fs);
      kd.points[j].y = read_le<double>(fs);
      kd.points[j].z = read_le<double>(fs);
    }
    h.dispositions.push_back(std::move(kd));
  }

  h.step_counter = read_le<uint64_t>(fs);
  uint64_t rng_len = read_le<uint64_t>(fs);
  h.rng_state.resize(rng_len);
  fs.read(h.rng_state.data(), static_cast<std::streamsize>(rng_len));
  if (!fs) throw ParseError(path + ": truncated rng state");
  return h;
}

}  // namespace

std::unique_ptr<Network> load_checkpoint(const std::string& path) {
  std::ifstream fs(path, std::ios::binary);
  if (!fs) throw IoError("cannot open " + path);
  CheckpointHeader h = read_header(fs, path);
  auto net = std::make_unique<Network>(h.config, 0);
  net->dispositions() = std::move(h.dispositions);
  net->step_counter = h.step_counter;
  net->train_rng.deserialize(h.rng_state);
  load_records_into(*net, fs);
  return net;
}

void load_checkpoint_into(Network& net, const std::string& path) {
  std::ifstream fs(path, std::ios::binary);
  if (!fs) throw IoError("cannot open " + path);
  CheckpointHeader h = read_header(fs, path);
  check_config_match(h.config, net.config());
  net.dispositions() = std::move(h.dispositions);
  net.step_counter = h.step_counter;
  net.train_rng.deserialize(h.rng_state);
  load_records_into(net, fs);
}

}  // namespace kpseg
