#include "kpseg/metrics.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "kpseg/errors.hpp"

namespace kpseg {

int64_t ConfusionMatrix::total() const {
  int64_t n = 0;
  for (const auto& row : counts)
    for (int64_t v : row) n += v;
  return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p) counts[t][p] += o.counts[t][p];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const std::vector<uint8_t>& predicted,
                const std::vector<uint8_t>& truth) {
  if (predicted.size() != truth.size())
    throw ArgumentError("accumulate: predicted/truth length mismatch");
  for (size_t i = 0; i < truth.size(); ++i) {
    uint8_t t = truth[i];
    if (t == kIgnoreLabel) continue;
    uint8_t p = predicted[i];
    if (t >= kNumClasses) throw ArgumentError("accumulate: truth label out of range");
    if (p >= kNumClasses) throw ArgumentError("accumulate: predicted label out of range");
    ++cm.counts[t][p];
  }
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const int64_t n = cm.total();
  if (n == 0) throw ArgumentError("compute_metrics: empty confusion matrix");

  MetricsReport report;
  report.counts = cm;
  int64_t diag = 0;
  double iou_sum = 0.0;
  int defined = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    int64_t tp = cm.counts[c][c];
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    diag += tp;
    int64_t denom = tp + fp + fn;
    if (denom > 0) {
      report.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
      iou_sum += *report.iou[c];
      ++defined;
    }
  }
  report.oa = static_cast<double>(diag) / static_cast<double>(n);
  report.miou = defined > 0 ? iou_sum / defined : 0.0;
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["oa"] = report.oa;
  j["miou"] = report.miou;
  nlohmann::json iou;
  for (int c = 0; c < kNumClasses; ++c)
    iou[class_names()[c]] = report.iou[c] ? nlohmann::json(*report.iou[c]) : nlohmann::json();
  j["iou"] = iou;
  nlohmann::json conf = nlohmann::json::array();
  for (int t = 0; t < kNumClasses; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < kNumClasses; ++p) row.push_back(report.counts.counts[t][p]);
    conf.push_back(row);
  }
  j["confusion"] = conf;
  return j.dump(2);
}

std::string metrics_to_table(const MetricsReport& report, const std::string& method_name) {
  std::ostringstream os;
  auto pct = [](std::optional<double> v) {
    char buf[16];
    if (!v) return std::string("    --");
    std::snprintf(buf, sizeof(buf), "%6.2f", *v * 100.0);
    return std::string(buf);
  };
  os << "Method            OA      mIoU    Natural Bridge  Road    Car     Pole    Guardrail\n";
  char head[64];
  std::snprintf(head, sizeof(head), "%-16s", method_name.c_str());
  os << head << ' ' << pct(report.oa) << "  " << pct(report.miou) << ' ';
  for (int c = 0; c < kNumClasses; ++c) os << ' ' << pct(report.iou[c]) << ' ';
  os << '\n';
  return os.str();
}

}  // namespace kpseg
