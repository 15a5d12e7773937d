#include <doctest.h>

#include <set>

#include "kpseg/metrics.hpp"
#include "kpseg/rng.hpp"

using namespace kpseg;

TEST_CASE("accumulate: diagonal case, ignore sentinel, validation") {
  ConfusionMatrix cm;
  std::vector<uint8_t> ten(10, 2);
  accumulate(cm, ten, ten);
  CHECK(cm.counts[2][2] == 10);
  CHECK(cm.total() == 10);

  ConfusionMatrix ign;
  accumulate(ign, {1, 2, 3}, {kIgnoreLabel, kIgnoreLabel, kIgnoreLabel});
  CHECK(ign.total() == 0);

  ConfusionMatrix bad;
  CHECK_THROWS_AS(accumulate(bad, {6}, {0}), ArgumentError);
  CHECK_THROWS_AS(accumulate(bad, {0}, {7}), ArgumentError);
  CHECK_THROWS_AS(accumulate(bad, {0, 1}, {0}), ArgumentError);
}

TEST_CASE("accumulate: chunked equals whole") {
  Rng rng(1);
  std::vector<uint8_t> pred, truth;
  for (int i = 0; i < 500; ++i) {
    pred.push_back(static_cast<uint8_t>(rng.uniform_index(6)));
    truth.push_back(rng.uniform() < 0.1 ? kIgnoreLabel
                                        : static_cast<uint8_t>(rng.uniform_index(6)));
  }
  ConfusionMatrix whole;
  accumulate(whole, pred, truth);

  ConfusionMatrix chunked;
  for (size_t at = 0; at < 500; at += 97) {
    size_t end = std::min<size_t>(500, at + 97);
    accumulate(chunked,
               std::vector<uint8_t>(pred.begin() + at, pred.begin() + end),
               std::vector<uint8_t>(truth.begin() + at, truth.begin() + end));
  }
  CHECK(whole.counts == chunked.counts);
}

TEST_CASE("compute_metrics: single-class arithmetic of the IoU formula") {
  ConfusionMatrix cm;
  cm.counts[1][1] = 50;  // TP
  cm.counts[0][1] = 10;  // FP for class 1
  cm.counts[1][3] = 5;   // FN for class 1
  MetricsReport r = compute_metrics(cm);
  REQUIRE(r.iou[1].has_value());
  CHECK(*r.iou[1] == doctest::Approx(50.0 / 65.0).epsilon(1e-12));
}

TEST_CASE("compute_metrics: perfect prediction") {
  ConfusionMatrix cm;
  for (int c = 0; c < 6; ++c) cm.counts[c][c] = 10 + c;
  MetricsReport r = compute_metrics(cm);
  CHECK(r.oa == 1.0);
  CHECK(r.miou == 1.0);
  for (int c = 0; c < 6; ++c) CHECK(*r.iou[c] == 1.0);
}

TEST_CASE("compute_metrics: the 4-point worked example") {
  ConfusionMatrix cm;
  accumulate(cm, {0, 1, 1, 1}, {0, 0, 1, 1});
  MetricsReport r = compute_metrics(cm);
  CHECK(r.oa == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(*r.iou[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(*r.iou[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.miou == doctest::Approx(7.0 / 12.0).epsilon(1e-15));
  for (int c = 2; c < 6; ++c) CHECK_FALSE(r.iou[c].has_value());
}

TEST_CASE("compute_metrics: empty matrix rejected") {
  ConfusionMatrix cm;
  CHECK_THROWS_AS(compute_metrics(cm), ArgumentError);
}

TEST_CASE("compute_metrics: agrees with the set-based oracle on random vectors") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    size_t n = 1 + rng.uniform_index(60);
    std::vector<uint8_t> pred(n), truth(n);
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<uint8_t>(rng.uniform_index(6));
      truth[i] = rng.uniform() < 0.15 ? kIgnoreLabel
                                      : static_cast<uint8_t>(rng.uniform_index(6));
      any |= truth[i] != kIgnoreLabel;
    }
    if (!any) truth[0] = 0;

    ConfusionMatrix cm;
    accumulate(cm, pred, truth);
    MetricsReport r = compute_metrics(cm);

    // oracle: explicit index sets, exact integer comparison
    int64_t correct = 0, total = 0;
    for (int c = 0; c < 6; ++c) {
      std::set<size_t> p_set, t_set;
      for (size_t i = 0; i < n; ++i) {
        if (truth[i] == kIgnoreLabel) continue;
        if (pred[i] == c) p_set.insert(i);
        if (truth[i] == c) t_set.insert(i);
      }
      std::set<size_t> inter;
      for (size_t i : p_set)
        if (t_set.count(i)) inter.insert(i);
      int64_t union_size = static_cast<int64_t>(p_set.size() + t_set.size() - inter.size());
      if (union_size == 0) {
        CHECK_FALSE(r.iou[c].has_value());
      } else {
        REQUIRE(r.iou[c].has_value());
        // exact rational equality: iou = |inter| / |union|
        int64_t tp = cm.counts[c][c];
        int64_t denom = tp;
        for (int o = 0; o < 6; ++o)
          if (o != c) denom += cm.counts[o][c] + cm.counts[c][o];
        CHECK(static_cast<int64_t>(inter.size()) * denom == tp * union_size);
        CHECK(*r.iou[c] == static_cast<double>(inter.size()) / union_size);
      }
    }
    for (size_t i = 0; i < n; ++i) {
      if (truth[i] == kIgnoreLabel) continue;
      ++total;
      correct += pred[i] == truth[i];
    }
    CHECK(r.oa == static_cast<double>(correct) / total);
  }
}

TEST_CASE("compute_metrics: permutation of point order changes nothing") {
  Rng rng(8);
  std::vector<uint8_t> pred, truth;
  for (int i = 0; i < 200; ++i) {
    pred.push_back(static_cast<uint8_t>(rng.uniform_index(6)));
    truth.push_back(static_cast<uint8_t>(rng.uniform_index(6)));
  }
  ConfusionMatrix a;
  accumulate(a, pred, truth);

  std::vector<uint32_t> perm(200);
  for (uint32_t i = 0; i < 200; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<uint8_t> pred2, truth2;
  for (uint32_t i : perm) {
    pred2.push_back(pred[i]);
    truth2.push_back(truth[i]);
  }
  ConfusionMatrix b;
  accumulate(b, pred2, truth2);
  CHECK(a.counts == b.counts);
}

TEST_CASE("metrics serialization: json fields and table shape") {
  ConfusionMatrix cm;
  accumulate(cm, {0, 1, 1, 1}, {0, 0, 1, 1});
  MetricsReport r = compute_metrics(cm);
  std::string j = metrics_to_json(r);
  CHECK(j.find("\"oa\"") != std::string::npos);
  CHECK(j.find("\"miou\"") != std::string::npos);
  CHECK(j.find("\"natural\"") != std::string::npos);
  CHECK(j.find("\"confusion\"") != std::string::npos);

  std::string table = metrics_to_table(r, "test");
  CHECK(table.find("Guardrail") != std::string::npos);
  CHECK(table.find("75.00") != std::string::npos);
}
