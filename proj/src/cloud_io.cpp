#include "kpseg/cloud_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "kpseg/errors.hpp"

namespace kpseg {

namespace {

constexpr char kKpcMagic[4] = {'K', 'P', 'C', '1'};

[[noreturn]] void parse_fail(const std::string& path, size_t line, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

std::string lower_ext(const std::string& path) {
  size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

void check_coord_finite(const std::string& path, size_t line, const Vec3& p) {
  if (!is_finite(p)) throw DataError(path + ":" + std::to_string(line) + ": non-finite coordinate");
}

// Text columns are written with 9 significant digits, enough to round-trip
// the single-precision payload of the binary format.
void write_real(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  os << buf;
}

// strtod-based so that "nan"/"inf" tokens parse and surface as data errors
// rather than stream failures
std::vector<double> parse_columns(const std::string& line, const std::string& path,
                                  size_t lineno) {
  std::vector<double> cols;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
      parse_fail(path, lineno, "not a number: '" + tok + "'");
    cols.push_back(v);
  }
  return cols;
}

LabeledCloud load_xyz(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw IoError("cannot open " + path);
  LabeledCloud cloud;
  std::string line;
  size_t lineno = 0;
  size_t ncols = 0;  // fixed by the first data line
  while (std::getline(fs, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::vector<double> cols = parse_columns(line, path, lineno);
    if (cols.empty()) continue;  // blank or comment-only line
    if (cols.size() < 3) parse_fail(path, lineno, "expected at least 3 columns");
    if (cols.size() > 5) parse_fail(path, lineno, "too many columns");
    if (ncols == 0) ncols = cols.size();
    if (cols.size() != ncols) parse_fail(path, lineno, "inconsistent column count");
    Vec3 p{cols[0], cols[1], cols[2]};
    check_coord_finite(path, lineno, p);
    cloud.coords.push_back(p);
    if (ncols >= 4) cloud.intensity.push_back(cols[3]);
    if (ncols >= 5) {
      double label = cols[4];
      if (label < 0 || label != std::floor(label) || !is_valid_label(static_cast<uint8_t>(label)))
        throw DataError(path + ":" + std::to_string(lineno) + ": invalid label");
      cloud.labels.push_back(static_cast<uint8_t>(label));
    }
  }
  return cloud;
}

void save_xyz(const LabeledCloud& cloud, const std::string& path) {
  std::ofstream fs(path);
  if (!fs) throw IoError("cannot open " + path + " for writing");
  // column layout is positional (x y z [intensity] [label]); a labeled cloud
  // without intensity gets a zero intensity column to stay parseable
  bool write_intensity = cloud.has_intensity() || cloud.has_labels();
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.coords[i];
    write_real(fs, p.x); fs << ' ';
    write_real(fs, p.y); fs << ' ';
    write_real(fs, p.z);
    if (write_intensity) {
      fs << ' ';
      write_real(fs, cloud.has_intensity() ? cloud.intensity[i] : 0.0);
    }
    if (cloud.has_labels()) fs << ' ' << static_cast<int>(cloud.labels[i]);
    fs << '\n';
  }
  if (!fs) throw IoError("write failed: " + path);
}

LabeledCloud load_ply(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw IoError("cannot open " + path);
  std::string line;
  size_t lineno = 0;

  auto next_line = [&]() -> std::string& {
    if (!std::getline(fs, line)) parse_fail(path, lineno, "unexpected end of header");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") parse_fail(path, lineno, "missing 'ply' magic");
  size_t n_vertices = 0;
  bool in_vertex_element = false;
  bool saw_format = false;
  std::vector<std::string> props;  // vertex property names, in file order
  while (true) {
    next_line();
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii") parse_fail(path, lineno, "only ascii PLY is supported");
      saw_format = true;
    } else if (tok == "element") {
      std::string name;
      ss >> name >> n_vertices;
      if (name != "vertex") parse_fail(path, lineno, "unsupported element '" + name + "'");
      in_vertex_element = true;
    } else if (tok == "property") {
      if (!in_vertex_element) parse_fail(path, lineno, "property before vertex element");
      std::string type, name;
      ss >> type >> name;
      if (type == "list") parse_fail(path, lineno, "list properties are not supported");
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    } else {
      parse_fail(path, lineno, "unknown header line '" + tok + "'");
    }
  }
  if (!saw_format) parse_fail(path, lineno, "missing format line");

  int xi = -1, yi = -1, zi = -1, inti = -1, labi = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    if (props[i] == "x") xi = i;
    else if (props[i] == "y") yi = i;
    else if (props[i] == "z") zi = i;
    else if (props[i] == "scalar_intensity" || props[i] == "intensity") inti = i;
    else if (props[i] == "label" || props[i] == "scalar_label") labi = i;
  }
  if (xi < 0 || yi < 0 || zi < 0) parse_fail(path, lineno, "missing x/y/z properties");

  LabeledCloud cloud;
  cloud.coords.reserve(n_vertices);
  for (size_t v = 0; v < n_vertices; ++v) {
    next_line();
    std::vector<double> row = parse_columns(line, path, lineno);
    if (row.size() < props.size()) parse_fail(path, lineno, "short vertex record");
    Vec3 p{row[xi], row[yi], row[zi]};
    check_coord_finite(path, lineno, p);
    cloud.coords.push_back(p);
    if (inti >= 0) cloud.intensity.push_back(row[inti]);
    if (labi >= 0) {
      double l = row[labi];
      if (l < 0 || l != std::floor(l) || !is_valid_label(static_cast<uint8_t>(l)))
        throw DataError(path + ":" + std::to_string(lineno) + ": invalid label");
      cloud.labels.push_back(static_cast<uint8_t>(l));
    }
  }
  return cloud;
}

void save_ply(const LabeledCloud& cloud, const std::string& path) {
  std::ofstream fs(path);
  if (!fs) throw IoError("cannot open " + path + " for writing");
  fs << "ply\nformat ascii 1.0\n";
  fs << "element vertex " << cloud.size() << '\n';
  fs << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_intensity()) fs << "property float scalar_intensity\n";
  if (cloud.has_labels()) fs << "property uchar label\n";
  fs << "end_header\n";
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.coords[i];
    write_real(fs, p.x); fs << ' ';
    write_real(fs, p.y); fs << ' ';
    write_real(fs, p.z);
    if (cloud.has_intensity()) { fs << ' '; write_real(fs, cloud.intensity[i]); }
    if (cloud.has_labels()) fs << ' ' << static_cast<int>(cloud.labels[i]);
    fs << '\n';
  }
  if (!fs) throw IoError("write failed: " + path);
}

template <typename T>
void read_le(std::istream& is, T& out) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  std::memcpy(&out, &v, sizeof(T));
}

template <typename T>
void write_le(std::ostream& os, T value) {
  uint64_t v = 0;
  std::memcpy(&v, &value, sizeof(T));
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

LabeledCloud load_kpc(const std::string& path) {
  std::ifstream fs(path, std::ios::binary);
  if (!fs) throw IoError("cannot open " + path);
  char magic[4];
  fs.read(magic, 4);
  if (!fs || std::memcmp(magic, kKpcMagic, 4) != 0)
    throw ParseError(path + ": bad magic, not a KPC1 file");
  uint8_t flags = 0;
  read_le(fs, flags);
  uint64_t n = 0;
  read_le(fs, n);
  if (!fs) throw ParseError(path + ": truncated header");
  bool with_intensity = flags & 1u;
  bool with_labels = flags & 2u;
  LabeledCloud cloud;
  cloud.coords.resize(n);
  if (with_intensity) cloud.intensity.resize(n);
  if (with_labels) cloud.labels.resize(n);
  for (uint64_t i = 0; i < n; ++i) {
    float x, y, z;
    read_le(fs, x);
    read_le(fs, y);
    read_le(fs, z);
    cloud.coords[i] = {x, y, z};
    if (with_intensity) {
      float v;
      read_le(fs, v);
      cloud.intensity[i] = v;
    }
    if (with_labels) {
      uint8_t l;
      read_le(fs, l);
      if (!is_valid_label(l))
        throw DataError(path + ": record " + std::to_string(i) + ": invalid label");
      cloud.labels[i] = l;
    }
    if (!fs) throw ParseError(path + ": truncated at record " + std::to_string(i));
  }
  for (uint64_t i = 0; i < n; ++i)
    if (!is_finite(cloud.coords[i]))
      throw DataError(path + ": record " + std::to_string(i) + ": non-finite coordinate");
  return cloud;
}

void save_kpc(const LabeledCloud& cloud, const std::string& path) {
  std::ofstream fs(path, std::ios::binary);
  if (!fs) throw IoError("cannot open " + path + " for writing");
  fs.write(kKpcMagic, 4);
  uint8_t flags = (cloud.has_intensity() ? 1u : 0u) | (cloud.has_labels() ? 2u : 0u);
  write_le(fs, flags);
  write_le(fs, static_cast<uint64_t>(cloud.size()));
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.coords[i];
    write_le(fs, static_cast<float>(p.x));
    write_le(fs, static_cast<float>(p.y));
    write_le(fs, static_cast<float>(p.z));
    if (cloud.has_intensity()) write_le(fs, static_cast<float>(cloud.intensity[i]));
    if (cloud.has_labels()) write_le(fs, cloud.labels[i]);
  }
  if (!fs) throw IoError("write failed: " + path);
}

}  // namespace

CloudFormat format_from_path(const std::string& path) {
  std::string ext = lower_ext(path);
  if (ext == "ply") return CloudFormat::ply_ascii;
  if (ext == "kpc") return CloudFormat::kpc_binary;
  if (ext == "xyz" || ext == "txt") return CloudFormat::xyz_text;
  throw ArgumentError("cannot infer cloud format from extension of '" + path + "'");
}

LabeledCloud load_cloud(const std::string& path, CloudFormat format) {
  LabeledCloud cloud;
  switch (format) {
    case CloudFormat::xyz_text: cloud = load_xyz(path); break;
    case CloudFormat::ply_ascii: cloud = load_ply(path); break;
    case CloudFormat::kpc_binary: cloud = load_kpc(path); break;
  }
  cloud.validate();
  return cloud;
}

LabeledCloud load_cloud(const std::string& path) {
  return load_cloud(path, format_from_path(path));
}

void save_cloud(const LabeledCloud& cloud, const std::string& path, CloudFormat format) {
  cloud.validate();
  switch (format) {
    case CloudFormat::xyz_text: save_xyz(cloud, path); break;
    case CloudFormat::ply_ascii: save_ply(cloud, path); break;
    case CloudFormat::kpc_binary: save_kpc(cloud, path); break;
  }
}

void save_cloud(const LabeledCloud& cloud, const std::string& path) {
  save_cloud(cloud, path, format_from_path(path));
}

}  // namespace kpseg
