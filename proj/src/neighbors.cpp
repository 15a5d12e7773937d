#include "kpseg/neighbors.hpp"

#include <algorithm>

#include "kpseg/errors.hpp"
#include "kpseg/grid.hpp"

namespace kpseg {

NeighborTable radius_search(const Points& queries, const Points& supports, double radius,
                            uint32_t max_neighbors) {
  if (radius <= 0.0) throw ArgumentError("radius_search: radius must be > 0");
  if (max_neighbors < 1) throw ArgumentError("radius_search: max_neighbors must be >= 1");

  const uint32_t S = static_cast<uint32_t>(supports.size());
  const size_t M = queries.size();
  const double r2 = radius * radius;

  // Grid hash with cell == radius keeps candidate sets to the 27 surrounding
  // cells while staying exact.
  GridIndex grid(supports, radius);

  struct Hit {
    double d2;
    uint32_t index;
    bool operator<(const Hit& o) const { return d2 != o.d2 ? d2 < o.d2 : index < o.index; }
  };

  std::vector<std::vector<uint32_t>> rows(M);
  std::vector<Hit> hits;
  uint32_t max_count = 0;
  for (size_t m = 0; m < M; ++m) {
    hits.clear();
    const Vec3& q = queries[m];
    CellKey qc = cell_of(q, radius);
    for (int64_t dx = -1; dx <= 1; ++dx)
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dz = -1; dz <= 1; ++dz) {
          const std::vector<uint32_t>* bucket = grid.cell({qc.x + dx, qc.y + dy, qc.z + dz});
          if (!bucket) continue;
          for (uint32_t s : *bucket) {
            double d2 = squared_norm(supports[s] - q);
            if (d2 <= r2) hits.push_back({d2, s});
          }
        }
    std::sort(hits.begin(), hits.end());
    if (hits.size() > max_neighbors) hits.resize(max_neighbors);
    rows[m].reserve(hits.size());
    for (const Hit& h : hits) rows[m].push_back(h.index);
    max_count = std::max<uint32_t>(max_count, static_cast<uint32_t>(hits.size()));
  }

  NeighborTable table;
  table.num_supports = S;
  table.radius = radius;
  table.width = std::max<uint32_t>(1, max_count);
  table.indices.assign(M * table.width, S);
  for (size_t m = 0; m < M; ++m)
    std::copy(rows[m].begin(), rows[m].end(), table.indices.begin() + m * table.width);
  return table;
}

}  // namespace kpseg
