#pragma once

#include <unordered_map>
#include <vector>

#include "kpseg/cloud.hpp"
#include "kpseg/geometry.hpp"

namespace kpseg {

// Uniform hash grid over a point set. Each point lives in exactly one cell,
// cell_of(p) = floor(p / cell_size).
class GridIndex {
 public:
  GridIndex(const Points& points, double cell_size);

  double cell_size() const { return cell_size_; }

  // Indices of points in the given cell; empty when the cell is unoccupied.
  const std::vector<uint32_t>* cell(const CellKey& key) const {
    auto it = cells_.find(key);
    return it == cells_.end() ? nullptr : &it->second;
  }

  const std::unordered_map<CellKey, std::vector<uint32_t>, CellKeyHash>& cells() const {
    return cells_;
  }

 private:
  double cell_size_;
  std::unordered_map<CellKey, std::vector<uint32_t>, CellKeyHash> cells_;
};

enum class LabelMode { majority, none };

// One output point per non-empty cell, at the barycenter of the cell's
// points. Intensity is averaged; the label is the majority vote within the
// cell (ties broken by smallest class id, ignore labels excluded unless the
// cell holds nothing else). Output order is lexicographic cell order.
LabeledCloud grid_subsample(const LabeledCloud& cloud, double cell,
                            LabelMode label_mode = LabelMode::majority);

}  // namespace kpseg
