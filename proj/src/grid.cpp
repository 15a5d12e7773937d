#include "kpseg/grid.hpp"

#include <algorithm>
#include <array>

#include "kpseg/errors.hpp"

namespace kpseg {

GridIndex::GridIndex(const Points& points, double cell_size) : cell_size_(cell_size) {
  if (cell_size <= 0.0) throw ArgumentError("grid cell size must be > 0");
  cells_.reserve(points.size());
  for (uint32_t i = 0; i < points.size(); ++i)
    cells_[cell_of(points[i], cell_size)].push_back(i);
}

LabeledCloud grid_subsample(const LabeledCloud& cloud, double cell, LabelMode label_mode) {
  if (cell <= 0.0) throw ArgumentError("grid_subsample: cell must be > 0");

  struct CellAgg {
    Vec3 coord_sum{0, 0, 0};
    double intensity_sum = 0.0;
    uint32_t count = 0;
    std::array<uint32_t, kNumClasses> votes{};
    uint32_t ignore_votes = 0;
  };

  std::unordered_map<CellKey, CellAgg, CellKeyHash> agg;
  agg.reserve(cloud.size());
  bool want_labels = label_mode == LabelMode::majority && cloud.has_labels();
  for (size_t i = 0; i < cloud.size(); ++i) {
    CellAgg& a = agg[cell_of(cloud.coords[i], cell)];
    a.coord_sum += cloud.coords[i];
    if (cloud.has_intensity()) a.intensity_sum += cloud.intensity[i];
    if (want_labels) {
      uint8_t l = cloud.labels[i];
      if (l == kIgnoreLabel) ++a.ignore_votes;
      else ++a.votes[l];
    }
    ++a.count;
  }

  std::vector<CellKey> order;
  order.reserve(agg.size());
  for (const auto& [key, _] : agg) order.push_back(key);
  std::sort(order.begin(), order.end());

  LabeledCloud out;
  out.coords.reserve(order.size());
  if (cloud.has_intensity()) out.intensity.reserve(order.size());
  if (want_labels) out.labels.reserve(order.size());
  for (const CellKey& key : order) {
    const CellAgg& a = agg.at(key);
    out.coords.push_back(a.coord_sum / static_cast<double>(a.count));
    if (cloud.has_intensity()) out.intensity.push_back(a.intensity_sum / a.count);
    if (want_labels) {
      uint8_t best = kIgnoreLabel;
      uint32_t best_votes = 0;
      for (int c = 0; c < kNumClasses; ++c) {
        if (a.votes[c] > best_votes) {
          best_votes = a.votes[c];
          best = static_cast<uint8_t>(c);
        }
      }
      out.labels.push_back(best);  // all-ignore cells stay unlabeled
    }
  }
  return out;
}

}  // namespace kpseg
