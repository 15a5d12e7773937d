#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kpseg/cloud.hpp"

namespace kpseg {

// C x C prediction counts; rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

  int64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

// Adds one point per (truth, predicted) pair; truth == 255 entries are
// skipped. Accumulation is associative, so chunked and whole-vector passes
// agree.
void accumulate(ConfusionMatrix& cm, const std::vector<uint8_t>& predicted,
                const std::vector<uint8_t>& truth);

struct MetricsReport {
  std::array<std::optional<double>, kNumClasses> iou;  // absent when TP+FP+FN == 0
  double oa = 0.0;
  double miou = 0.0;
  ConfusionMatrix counts;
};

// IoU_c = TP / (TP + FP + FN) per class, OA = sum TP / N, mIoU = mean of the
// defined per-class IoUs.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

std::string metrics_to_json(const MetricsReport& report);

// Plain-text table: one row of OA / mIoU / per-class IoU percentages.
std::string metrics_to_table(const MetricsReport& report, const std::string& method_name);

}  // namespace kpseg
