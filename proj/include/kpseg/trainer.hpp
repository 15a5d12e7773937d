#pragma once

#include <ostream>
#include <vector>

#include "kpseg/metrics.hpp"
#include "kpseg/network.hpp"
#include "kpseg/run_config.hpp"

namespace kpseg {

// Training corpus: clouds already resampled to the input grid, with the set
// of points usable as sphere centers.
struct Dataset {
  std::vector<LabeledCloud> clouds;

  size_t total_points() const {
    size_t n = 0;
    for (const auto& c : clouds) n += c.size();
    return n;
  }
};

// Loads clouds and resamples each to cell_sizes[0] with majority labels.
Dataset load_dataset(const std::vector<std::string>& paths, const NetworkConfig& cfg);
Dataset make_dataset(std::vector<LabeledCloud> clouds, const NetworkConfig& cfg);

struct StepReport {
  uint64_t step = 0;
  double loss = 0.0;
  double batch_oa = 0.0;
  double lr = 0.0;
};

class Trainer {
 public:
  Trainer(Network& net, const RunConfig& cfg);

  // One optimizer step: sample batch_spheres sphere centers, extract and
  // augment the 5 m spheres, build the pyramid, forward/backward, update.
  // Spheres without a labeled point are resampled (bounded retries).
  StepReport train_step(const Dataset& data);

  // Runs `total_steps` steps, writing one JSON line per step to `log` when
  // given. With workers > 1 the next batch's pyramid is built concurrently
  // with the current update; results are identical to the serial order.
  std::vector<StepReport> train(const Dataset& data, int total_steps, std::ostream* log);

  double current_lr() const;

 private:
  struct BatchData;
  BatchData sample_batch(const Dataset& data);
  StepReport step_on(BatchData& batch);

  Network& net_;
  RunConfig cfg_;
};

struct PredictResult {
  std::vector<uint8_t> labels;
  Mat probs;  // per-point mean softmax over all covering spheres
};

// Full-cloud inference: covers the cloud with sphere_radius spheres centered
// on a tile_stride lattice (stride must not exceed the sphere radius, which
// guarantees every point is covered), averages the per-point softmax over
// all covering spheres and takes the argmax.
PredictResult predict_cloud(Network& net, const LabeledCloud& cloud, double tile_stride = 2.5);

// Predicts on every cloud (resampled to the input grid) and accumulates the
// confusion against its labels.
ConfusionMatrix evaluate_clouds(Network& net, const std::vector<LabeledCloud>& clouds,
                                double tile_stride = 2.5);

}  // namespace kpseg
