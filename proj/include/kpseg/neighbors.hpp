#pragma once

#include <cstdint>
#include <vector>

#include "kpseg/geometry.hpp"

namespace kpseg {

// Fixed-width neighbor lists for M query points over S support points.
// Rows are padded with the shadow index (== S), a virtual point with zero
// features, so downstream convolutions need no ragged arrays. Real entries
// are sorted by increasing distance (ties by index) and precede all padding.
struct NeighborTable {
  uint32_t num_supports = 0;  // S; shadow index == S
  uint32_t width = 1;         // row stride, always >= 1
  double radius = 0.0;
  std::vector<uint32_t> indices;  // M * width

  size_t num_queries() const { return indices.size() / width; }
  uint32_t shadow_index() const { return num_supports; }

  const uint32_t* row(size_t m) const { return indices.data() + m * width; }

  // Number of non-shadow entries in row m.
  uint32_t row_count(size_t m) const {
    const uint32_t* r = row(m);
    uint32_t c = 0;
    while (c < width && r[c] != num_supports) ++c;
    return c;
  }
};

// Exact radius search: row m holds the supports within `radius` of query m
// (closed ball), truncated to the max_neighbors nearest when over the cap.
// Results are independent of internal evaluation order.
NeighborTable radius_search(const Points& queries, const Points& supports, double radius,
                            uint32_t max_neighbors = 40);

}  // namespace kpseg
