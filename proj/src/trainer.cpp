#include "kpseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <unordered_set>

#include <json.hpp>

#include "kpseg/cloud_io.hpp"
#include "kpseg/errors.hpp"
#include "kpseg/grid.hpp"

namespace kpseg {

Dataset make_dataset(std::vector<LabeledCloud> clouds, const NetworkConfig& cfg) {
  Dataset data;
  for (LabeledCloud& c : clouds) {
    LabeledCloud sub = grid_subsample(c, cfg.cell_sizes[0], LabelMode::majority);
    if (sub.size() == 0) continue;
    data.clouds.push_back(std::move(sub));
  }
  if (data.clouds.empty()) throw ArgumentError("dataset: no non-empty clouds");
  return data;
}

Dataset load_dataset(const std::vector<std::string>& paths, const NetworkConfig& cfg) {
  std::vector<LabeledCloud> clouds;
  for (const std::string& p : paths) clouds.push_back(load_cloud(p));
  return make_dataset(std::move(clouds), cfg);
}

struct Trainer::BatchData {
  MultiscaleBatch pyramid;
  uint64_t step = 0;
};

Trainer::Trainer(Network& net, const RunConfig& cfg) : net_(net), cfg_(cfg) {
  cfg_.validate();
}

double Trainer::current_lr() const {
  int epoch = static_cast<int>(net_.step_counter / cfg_.optim.steps_per_epoch);
  return cfg_.optim.lr * std::pow(cfg_.optim.lr_decay, epoch);
}

Trainer::BatchData Trainer::sample_batch(const Dataset& data) {
  constexpr int kMaxRetries = 50;
  Rng& rng = net_.train_rng;
  const NetworkConfig& net_cfg = net_.config();

  std::vector<LabeledCloud> spheres;
  for (int s = 0; s < net_cfg.batch_spheres; ++s) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
      const LabeledCloud& cloud = data.clouds[rng.uniform_index(data.clouds.size())];
      if (cloud.size() == 0) continue;
      uint32_t center_idx = static_cast<uint32_t>(rng.uniform_index(cloud.size()));
      SphereExtract ex = extract_sphere(cloud, cloud.coords[center_idx], net_cfg.sphere_radius);
      bool labeled = false;
      for (uint8_t l : ex.cloud.labels) labeled |= l != kIgnoreLabel;
      if (!labeled) continue;
      // local frame about the sphere center, then augmentation
      Vec3 center = cloud.coords[center_idx];
      for (Vec3& p : ex.cloud.coords) p -= center;
      spheres.push_back(augment(ex.cloud, cfg_.aug, rng));
      ok = true;
    }
    if (!ok)
      throw DataError("train_step: could not sample a sphere with labeled points (50 tries)");
  }

  BatchData batch;
  batch.pyramid = build_pyramid(spheres, net_cfg);
  return batch;
}

StepReport Trainer::step_on(BatchData& batch) {
  const NetworkConfig& net_cfg = net_.config();
  Mat logits = net_.forward(batch.pyramid, /*train=*/true);

  Vec weights;
  const Vec* weights_ptr = nullptr;
  if (cfg_.optim.class_weighting == "inverse") {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(net_cfg.num_classes);
    double total = 0;
    for (uint8_t l : batch.pyramid.labels)
      if (l != kIgnoreLabel) {
        counts(l) += 1.0;
        total += 1.0;
      }
    weights = Vec::Ones(net_cfg.num_classes);
    for (int c = 0; c < net_cfg.num_classes; ++c)
      if (counts(c) > 0) weights(c) = total / (net_cfg.num_classes * counts(c));
    weights_ptr = &weights;
  }

  CrossEntropyResult ce = softmax_cross_entropy(logits, batch.pyramid.labels, weights_ptr);

  int64_t correct = 0, valid = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    uint8_t t = batch.pyramid.labels[i];
    if (t == kIgnoreLabel) continue;
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    correct += arg == t;
    ++valid;
  }

  double lr = current_lr();
  net_.backward(batch.pyramid, ce.grad_logits);
  net_.params().momentum_step(lr, cfg_.optim.momentum);
  ++net_.step_counter;

  StepReport report;
  report.step = net_.step_counter;
  report.loss = ce.loss;
  report.batch_oa = valid > 0 ? static_cast<double>(correct) / valid : 0.0;
  report.lr = lr;
  return report;
}

StepReport Trainer::train_step(const Dataset& data) {
  BatchData batch = sample_batch(data);
  return step_on(batch);
}

std::vector<StepReport> Trainer::train(const Dataset& data, int total_steps, std::ostream* log) {
  std::vector<StepReport> reports;
  reports.reserve(total_steps);

  auto emit = [&](const StepReport& r) {
    reports.push_back(r);
    if (log) {
      nlohmann::json j;
      j["step"] = r.step;
      j["loss"] = r.loss;
      j["batch_oa"] = r.batch_oa;
      j["lr"] = r.lr;
      *log << j.dump() << '\n';
    }
  };

  if (cfg_.workers <= 1) {
    for (int s = 0; s < total_steps; ++s) emit(train_step(data));
    return reports;
  }

  // Pipeline: the rng draws stay on this thread (sample order unchanged),
  // only the pure pyramid construction overlaps the optimizer step.
  std::future<BatchData> pending;
  auto launch = [&]() {
    return std::async(std::launch::async, [this, &data]() { return sample_batch(data); });
  };
  pending = launch();
  for (int s = 0; s < total_steps; ++s) {
    BatchData batch = pending.get();
    if (s + 1 < total_steps) pending = launch();
    emit(step_on(batch));
  }
  return reports;
}

PredictResult predict_cloud(Network& net, const LabeledCloud& cloud, double tile_stride) {
  const NetworkConfig& cfg = net.config();
  if (tile_stride <= 0.0 || tile_stride > cfg.sphere_radius)
    throw ArgumentError("predict_cloud: tile_stride must be in (0, sphere_radius]");
  const size_t n = cloud.size();
  PredictResult result;
  result.probs = Mat::Zero(n, cfg.num_classes);
  result.labels.assign(n, 0);
  if (n == 0) return result;

  // tile centers: occupied cells of a stride lattice anchored at the cloud's
  // bounding-box minimum. The anchor makes the tiling translation-covariant;
  // nearest-cell rounding keeps every point within sqrt(3)/2 * stride of a
  // center, which is < sphere_radius whenever stride <= sphere_radius.
  Vec3 anchor = bounding_box(cloud.coords).lo;
  std::unordered_set<CellKey, CellKeyHash> occupied;
  for (const Vec3& p : cloud.coords)
    occupied.insert({static_cast<int64_t>(std::llround((p.x - anchor.x) / tile_stride)),
                     static_cast<int64_t>(std::llround((p.y - anchor.y) / tile_stride)),
                     static_cast<int64_t>(std::llround((p.z - anchor.z) / tile_stride))});
  std::vector<CellKey> centers(occupied.begin(), occupied.end());
  std::sort(centers.begin(), centers.end());

  std::vector<uint32_t> cover_count(n, 0);
  for (const CellKey& key : centers) {
    Vec3 center = anchor + Vec3{key.x * tile_stride, key.y * tile_stride, key.z * tile_stride};
    SphereExtract ex = extract_sphere(cloud, center, cfg.sphere_radius);
    if (ex.cloud.size() == 0) continue;
    for (Vec3& p : ex.cloud.coords) p -= center;  // translation-covariant frame
    ex.cloud.labels.clear();
    MultiscaleBatch pyramid = build_pyramid(ex.cloud, cfg);
    Mat logits = net.forward(pyramid, /*train=*/false);
    Mat probs = softmax_rows(logits);
    for (size_t i = 0; i < ex.index_map.size(); ++i) {
      result.probs.row(ex.index_map[i]) += probs.row(i);
      ++cover_count[ex.index_map[i]];
    }
  }

  for (size_t i = 0; i < n; ++i) {
    if (cover_count[i] == 0)
      throw DataError("predict_cloud: point not covered by any sphere");
    result.probs.row(i) /= static_cast<double>(cover_count[i]);
    Eigen::Index arg;
    result.probs.row(i).maxCoeff(&arg);
    result.labels[i] = static_cast<uint8_t>(arg);
  }
  return result;
}

ConfusionMatrix evaluate_clouds(Network& net, const std::vector<LabeledCloud>& clouds,
                                double tile_stride) {
  ConfusionMatrix cm;
  for (const LabeledCloud& cloud : clouds) {
    if (!cloud.has_labels()) continue;
    PredictResult pred = predict_cloud(net, cloud, tile_stride);
    accumulate(cm, pred.labels, cloud.labels);
  }
  return cm;
}

}  // namespace kpseg
