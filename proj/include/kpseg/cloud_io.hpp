#pragma once

#include <string>

#include "kpseg/cloud.hpp"

namespace kpseg {

enum class CloudFormat { ply_ascii, kpc_binary, xyz_text };

// Picks the format from the file extension: .ply, .kpc, .xyz (or .txt).
CloudFormat format_from_path(const std::string& path);

LabeledCloud load_cloud(const std::string& path, CloudFormat format);
LabeledCloud load_cloud(const std::string& path);

void save_cloud(const LabeledCloud& cloud, const std::string& path, CloudFormat format);
void save_cloud(const LabeledCloud& cloud, const std::string& path);

}  // namespace kpseg
