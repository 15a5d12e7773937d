#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kpseg/errors.hpp"
#include "kpseg/geometry.hpp"

namespace kpseg {

inline constexpr int kNumClasses = 6;
inline constexpr uint8_t kIgnoreLabel = 255;

// Class taxonomy. Indices are part of the file formats, do not reorder.
enum class ClassId : uint8_t {
  natural = 0,
  bridge = 1,
  road = 2,
  car = 3,
  pole = 4,
  guardrail = 5,
};

inline const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names = {
      "natural", "bridge", "road", "car", "pole", "guardrail"};
  return names;
}

inline bool is_valid_label(uint8_t v) { return v < kNumClasses || v == kIgnoreLabel; }

// N points with optional per-point intensity and class labels. Optional
// channels are either empty or exactly N long.
struct LabeledCloud {
  Points coords;
  std::vector<double> intensity;  // unitless, [0, 1]
  std::vector<uint8_t> labels;    // 0..5, 255 = unlabeled

  size_t size() const { return coords.size(); }
  bool has_intensity() const { return !intensity.empty(); }
  bool has_labels() const { return !labels.empty(); }

  void validate() const {
    if (has_intensity() && intensity.size() != coords.size())
      throw DataError("intensity channel length mismatch");
    if (has_labels() && labels.size() != coords.size())
      throw DataError("label channel length mismatch");
    for (const Vec3& p : coords)
      if (!is_finite(p)) throw DataError("non-finite coordinate");
    for (uint8_t l : labels)
      if (!is_valid_label(l)) throw DataError("label out of range: " + std::to_string(l));
  }

  bool operator==(const LabeledCloud& o) const {
    return coords == o.coords && intensity == o.intensity && labels == o.labels;
  }
};

}  // namespace kpseg
