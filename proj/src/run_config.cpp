#include "kpseg/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kpseg/errors.hpp"

namespace kpseg {

namespace {
using nlohmann::json;
}

void OptimConfig::validate() const {
  if (lr <= 0.0) throw ArgumentError("config: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("config: momentum must be in [0, 1)");
  if (epochs < 1 || steps_per_epoch < 1)
    throw ArgumentError("config: epochs and steps_per_epoch must be >= 1");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw ArgumentError("config: lr_decay must be in (0, 1]");
  if (class_weighting != "none" && class_weighting != "inverse")
    throw ArgumentError("config: class_weighting must be 'none' or 'inverse'");
}

void RunConfig::validate() const {
  net.validate();
  optim.validate();
  aug.validate();
  if (workers < 1) throw ArgumentError("config: workers must be >= 1");
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  cfg.preset = name;
  if (name == "paper") {
    // defaults in NetworkConfig/OptimConfig already encode the protocol
  } else if (name == "tiny") {
    cfg.net.channels = {8, 16, 32, 64, 128};
    cfg.net.neighbor_radius_mult = 2.5;
    cfg.optim.epochs = 2;
    cfg.optim.steps_per_epoch = 100;
  } else {
    throw ArgumentError("config: unknown preset '" + name + "'");
  }
  return cfg;
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config: top level must be a JSON object");

  std::string preset = "paper";
  if (j.contains("preset")) preset = j.at("preset").get<std::string>();
  RunConfig cfg = preset_config(preset);

  try {
    for (auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      else if (key == "num_layers") cfg.net.num_layers = value.get<int>();
      else if (key == "radii") cfg.net.radii = value.get<std::vector<double>>();
      else if (key == "cell_sizes") cfg.net.cell_sizes = value.get<std::vector<double>>();
      else if (key == "neighbor_radius_mult") cfg.net.neighbor_radius_mult = value.get<double>();
      else if (key == "stack_depth") cfg.net.stack_depth = value.get<int>();
      else if (key == "channels") cfg.net.channels = value.get<std::vector<int>>();
      else if (key == "num_classes") cfg.net.num_classes = value.get<int>();
      else if (key == "sphere_radius") cfg.net.sphere_radius = value.get<double>();
      else if (key == "batch_spheres") cfg.net.batch_spheres = value.get<int>();
      else if (key == "use_intensity") cfg.net.use_intensity = value.get<bool>();
      else if (key == "kernel_points") cfg.net.kernel_points = value.get<int>();
      else if (key == "influence_ratio") cfg.net.influence_ratio = value.get<double>();
      else if (key == "leaky_slope") cfg.net.leaky_slope = value.get<double>();
      else if (key == "bn_momentum") cfg.net.bn_momentum = value.get<double>();
      else if (key == "bn_epsilon") cfg.net.bn_epsilon = value.get<double>();
      else if (key == "max_neighbors") cfg.net.max_neighbors = value.get<uint32_t>();
      else if (key == "kernel_seed") cfg.net.kernel_seed = value.get<uint64_t>();
      else if (key == "lr") cfg.optim.lr = value.get<double>();
      else if (key == "momentum") cfg.optim.momentum = value.get<double>();
      else if (key == "epochs") cfg.optim.epochs = value.get<int>();
      else if (key == "steps_per_epoch") cfg.optim.steps_per_epoch = value.get<int>();
      else if (key == "lr_decay") cfg.optim.lr_decay = value.get<double>();
      else if (key == "class_weighting") cfg.optim.class_weighting = value.get<std::string>();
      else if (key == "aug_scale") {
        cfg.aug.scale_min = value.at(0).get<double>();
        cfg.aug.scale_max = value.at(1).get<double>();
      }
      else if (key == "aug_rotate_z") cfg.aug.rotate_z = value.get<bool>();
      else if (key == "aug_shuffle") cfg.aug.shuffle = value.get<bool>();
      else if (key == "seed") cfg.seed = value.get<uint64_t>();
      else if (key == "workers") cfg.workers = value.get<int>();
      else if (key == "data_dir") cfg.data_dir = value.get<std::string>();
      else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
      else throw ArgumentError("config: unknown key '" + key + "'");
    }
  } catch (const json::type_error& e) {
    throw ParseError(std::string("config: type mismatch: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << fs.rdbuf();
  return run_config_from_json(buf.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["preset"] = cfg.preset;
  j["num_layers"] = cfg.net.num_layers;
  j["radii"] = cfg.net.radii;
  j["cell_sizes"] = cfg.net.cell_sizes;
  j["neighbor_radius_mult"] = cfg.net.neighbor_radius_mult;
  j["stack_depth"] = cfg.net.stack_depth;
  j["channels"] = cfg.net.channels;
  j["num_classes"] = cfg.net.num_classes;
  j["sphere_radius"] = cfg.net.sphere_radius;
  j["batch_spheres"] = cfg.net.batch_spheres;
  j["use_intensity"] = cfg.net.use_intensity;
  j["kernel_points"] = cfg.net.kernel_points;
  j["influence_ratio"] = cfg.net.influence_ratio;
  j["leaky_slope"] = cfg.net.leaky_slope;
  j["bn_momentum"] = cfg.net.bn_momentum;
  j["bn_epsilon"] = cfg.net.bn_epsilon;
  j["max_neighbors"] = cfg.net.max_neighbors;
  j["kernel_seed"] = cfg.net.kernel_seed;
  j["lr"] = cfg.optim.lr;
  j["momentum"] = cfg.optim.momentum;
  j["epochs"] = cfg.optim.epochs;
  j["steps_per_epoch"] = cfg.optim.steps_per_epoch;
  j["lr_decay"] = cfg.optim.lr_decay;
  j["class_weighting"] = cfg.optim.class_weighting;
  j["aug_scale"] = {cfg.aug.scale_min, cfg.aug.scale_max};
  j["aug_rotate_z"] = cfg.aug.rotate_z;
  j["aug_shuffle"] = cfg.aug.shuffle;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["data_dir"] = cfg.data_dir;
  j["out_dir"] = cfg.out_dir;
  return j.dump(2);
}

}  // namespace kpseg
