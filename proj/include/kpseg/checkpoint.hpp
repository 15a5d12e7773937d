#pragma once

#include <memory>
#include <string>

#include "kpseg/network.hpp"

namespace kpseg {

// Canonical (sorted-key) JSON encoding of a network config; stable byte-wise.
std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& json_text);

// Checkpoint file: magic "KPCK", version, config JSON blob, kernel
// dispositions, step counter, rng state, then named tensor records
// (little-endian f64). Saving a just-loaded network reproduces the file
// byte for byte.
void save_checkpoint(Network& net, const std::string& path);

// Rebuilds the network from the embedded config.
std::unique_ptr<Network> load_checkpoint(const std::string& path);

// Loads into an existing network; throws naming the first mismatched config
// field when the checkpoint was written with a different architecture.
void load_checkpoint_into(Network& net, const std::string& path);

}  // namespace kpseg
