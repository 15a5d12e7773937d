#pragma once

#include <string>

#include "kpseg/network.hpp"
#include "kpseg/sampling.hpp"

namespace kpseg {

struct OptimConfig {
  double lr = 0.01;
  double momentum = 0.98;
  int epochs = 50;
  int steps_per_epoch = 500;
  double lr_decay = 1.0;                 // per-epoch multiplier
  std::string class_weighting = "none";  // "none" | "inverse"

  void validate() const;
};

// Merged view of the network, optimizer and data-pipeline settings; the unit
// every CLI subcommand and experiment record works with.
struct RunConfig {
  std::string preset = "paper";
  NetworkConfig net;
  OptimConfig optim;
  AugConfig aug;
  uint64_t seed = 0;
  int workers = 1;
  std::string data_dir;
  std::string out_dir;

  void validate() const;
};

// "paper": the training protocol as published (lr 0.01, momentum 0.98,
// 6 spheres of 5 m, radii 0.1..1.6 m, triple-stacked convolutions, channel
// plan 32..512). "tiny": same protocol with the reduced channel plan
// 8..128 and a widened neighborhood multiplier for desk-scale runs.
RunConfig preset_config(const std::string& name);

// Parses a JSON config: the optional "preset" key picks the base, remaining
// keys override individual fields. Unknown keys are rejected by name.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical echo of the effective configuration.
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace kpseg
