#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kpseg/cloud.hpp"
#include "kpseg/kpconv.hpp"
#include "kpseg/layers.hpp"
#include "kpseg/params.hpp"
#include "kpseg/rng.hpp"

namespace kpseg {

struct NetworkConfig {
  int num_layers = 5;
  std::vector<double> radii = {0.1, 0.2, 0.4, 0.8, 1.6};
  std::vector<double> cell_sizes = {0.1, 0.2, 0.4, 0.8, 1.6};
  // Convolution radius at layer l is radii[l] * neighbor_radius_mult.
  // radius == cell yields sparse neighborhoods, so presets may widen it.
  double neighbor_radius_mult = 1.0;
  int stack_depth = 3;
  std::vector<int> channels = {32, 64, 128, 256, 512};
  int num_classes = kNumClasses;
  double sphere_radius = 5.0;
  int batch_spheres = 6;
  bool use_intensity = false;
  int kernel_points = kDefaultKernelPoints;
  double influence_ratio = kDefaultInfluenceRatio;
  double leaky_slope = kDefaultLeakySlope;
  double bn_momentum = kDefaultBnMomentum;
  double bn_epsilon = kDefaultBnEpsilon;
  uint32_t max_neighbors = 40;
  uint64_t kernel_seed = 42;

  int first_feature_dim() const { return use_intensity ? 2 : 1; }
  double conv_radius(int layer) const { return radii[layer] * neighbor_radius_mult; }
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

// Everything one forward pass needs for a batch: per-layer point sets,
// self-neighborhoods, pooling tables and upsampling maps, with the
// spheres of a batch stacked into one index space.
struct MultiscaleBatch {
  struct Layer {
    Points points;
    NeighborTable neighbors;        // queries == supports == points
    NeighborTable pool;             // queries = next layer's points (absent on last layer)
    std::vector<uint32_t> upsample; // per point, nearest next-layer point (absent on last layer)
  };
  std::vector<Layer> layers;
  std::vector<uint8_t> labels;      // layer-0 labels (empty for unlabeled inference)
  std::vector<double> intensity;    // layer-0 intensity (kept only when configured as input)
  std::vector<size_t> sphere_lengths;

  size_t point_count() const { return layers.empty() ? 0 : layers[0].points.size(); }
  void translate(const Vec3& t);
};

// Builds the subsampling pyramid for one or more spheres. Each sphere gets
// its own neighborhood structure; indices are then stacked so the batch runs
// as one concatenated point set (batch normalization spans all spheres).
MultiscaleBatch build_pyramid(const std::vector<LabeledCloud>& spheres, const NetworkConfig& cfg);
MultiscaleBatch build_pyramid(const LabeledCloud& batch, const NetworkConfig& cfg);

// Nearest support index for each query (exact, grid-accelerated).
std::vector<uint32_t> nearest_indices(const Points& queries, const Points& supports);

// Copies each coarse-layer feature row to the fine-layer points that map to
// it. `upsample[i]` must index into `coarse`.
Mat upsample_nearest(const Mat& coarse, const std::vector<uint32_t>& upsample);

// One BN -> KPConv -> LeakyReLU unit. Shares the layer's neighbor table and
// kernel disposition with its siblings; owns its parameters.
struct ConvUnit {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  Parameter* weights = nullptr;
  BNRunning running;
  int in_channels = 0;
  int out_channels = 0;

  // caches from the last train-mode forward
  BNCache bn_cache;
  Mat bn_out;
  Mat aggregate;
  Mat conv_out;

  Mat forward(const Points& queries, const Points& supports, const NeighborTable& nbrs,
              const KernelDisposition& kd, const Mat& x, bool train, double slope);
  // Returns the gradient wrt x; accumulates parameter gradients.
  Mat backward(const Points& queries, const Points& supports, const NeighborTable& nbrs,
               const KernelDisposition& kd, const Mat& grad_out, double slope);
};

// n stacked units at one scale. The receptive field grows to n hops of the
// shared neighbor graph without recomputing neighborhoods.
class StackedBlock {
 public:
  StackedBlock() = default;
  StackedBlock(ParameterStore& store, const std::string& prefix, int depth, int in_channels,
               int out_channels, int kernel_count, double bn_momentum, double bn_epsilon);

  Mat forward(const Points& points, const NeighborTable& nbrs, const KernelDisposition& kd,
              const Mat& x, bool train, double slope);
  Mat backward(const Points& points, const NeighborTable& nbrs, const KernelDisposition& kd,
               const Mat& grad_out, double slope);

  std::vector<ConvUnit>& units() { return units_; }
  const std::vector<ConvUnit>& units() const { return units_; }

 private:
  std::vector<ConvUnit> units_;
};

// The 5-layer U-Net: per-layer stacked blocks and strided-KPConv pooling on
// the way down, nearest-neighbor upsampling with skip concatenation and
// pointwise convolutions on the way up, and a pointwise head to class logits.
class Network {
 public:
  Network(const NetworkConfig& cfg, uint64_t init_seed);

  const NetworkConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const std::vector<KernelDisposition>& dispositions() const { return dispositions_; }
  std::vector<KernelDisposition>& dispositions() { return dispositions_; }

  Mat forward(const MultiscaleBatch& batch, bool train);
  // Backpropagates from d(loss)/d(logits); accumulates parameter gradients.
  void backward(const MultiscaleBatch& batch, const Mat& grad_logits);

  uint64_t step_counter = 0;
  Rng train_rng{0};

  // Named non-learnable state (BN running statistics), for checkpoints.
  std::vector<std::pair<std::string, Vec*>> state_records();

 private:
  NetworkConfig cfg_;
  ParameterStore params_;
  std::vector<KernelDisposition> dispositions_;  // one per layer, scaled to conv radius
  std::vector<StackedBlock> blocks_;             // num_layers
  struct PoolStage {                             // bare strided conv, no BN/activation
    Parameter* weights = nullptr;
    Mat aggregate;
  };
  std::vector<PoolStage> pools_;                 // num_layers - 1
  // decoder stage: BN -> pointwise conv -> LeakyReLU over the concatenated
  // (upsampled, skip) features. The normalization keeps the unbounded
  // convolution sums from the encoder in a trainable range at the published
  // optimizer settings.
  struct DecoderStage {
    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;
    Parameter* w = nullptr;
    Parameter* b = nullptr;
    BNRunning running;
    BNCache bn_cache;
    Mat bn_out;
    Mat lin_out;
  };
  std::vector<DecoderStage> decoder_;            // num_layers - 1, coarse to fine
  struct HeadStage {
    Parameter* w = nullptr;
    Parameter* b = nullptr;
  };
  HeadStage head_;

  // forward caches
  const MultiscaleBatch* last_batch_ = nullptr;
  std::vector<Mat> skip_cache_;
  std::vector<Mat> pool_in_cache_;
  Mat head_in_cache_;
};

}  // namespace kpseg
