#pragma once

#include <cstdint>
#include <vector>

#include "kpseg/matrix.hpp"

namespace kpseg {

inline constexpr double kDefaultLeakySlope = 0.1;
inline constexpr double kDefaultBnMomentum = 0.98;
inline constexpr double kDefaultBnEpsilon = 1e-6;

// ---- pointwise (1x1) linear map --------------------------------------------

Mat unary_forward(const Mat& x, const Mat& w, const Mat& bias);

struct UnaryGrads {
  Mat x;
  Mat w;
  Mat bias;  // 1 x C_out
};

UnaryGrads unary_backward(const Mat& x, const Mat& w, const Mat& grad_out);

// ---- leaky ReLU -------------------------------------------------------------

Mat leaky_relu_forward(const Mat& x, double slope = kDefaultLeakySlope);
Mat leaky_relu_backward(const Mat& x, const Mat& grad_out, double slope = kDefaultLeakySlope);

// ---- batch normalization ----------------------------------------------------

// Exponential-moving-average statistics used in eval mode.
struct BNRunning {
  Vec mean;
  Vec var;
  double momentum = kDefaultBnMomentum;
  double epsilon = kDefaultBnEpsilon;

  explicit BNRunning(Eigen::Index channels = 0)
      : mean(Vec::Zero(channels)), var(Vec::Ones(channels)) {}
};

struct BNCache {
  Mat xhat;
  Vec inv_std;
};

// Train mode: standardizes each channel over all N points with the biased
// batch variance, applies the affine (gamma, beta), and updates the running
// stats in place. Requires N >= 2. Fills `cache` for the backward pass.
Mat batch_norm_train(const Mat& x, const Vec& gamma, const Vec& beta, BNRunning& running,
                     BNCache* cache = nullptr);

// Eval mode: standardizes with the running statistics; no state change.
Mat batch_norm_eval(const Mat& x, const Vec& gamma, const Vec& beta, const BNRunning& running);

struct BNGrads {
  Mat x;
  Vec gamma;
  Vec beta;
};

BNGrads batch_norm_backward(const Mat& grad_out, const BNCache& cache, const Vec& gamma);

// Spec-shaped convenience wrapper bundling the affine terms with the stats.
struct BNState {
  Vec gamma;
  Vec beta;
  BNRunning running;
  enum class Mode { train, eval } mode = Mode::train;

  explicit BNState(Eigen::Index channels = 0)
      : gamma(Vec::Ones(channels)), beta(Vec::Zero(channels)), running(channels) {}
};

Mat batch_norm(const Mat& x, BNState& state, BNCache* cache = nullptr);

// ---- softmax cross-entropy --------------------------------------------------

Mat softmax_rows(const Mat& logits);

struct CrossEntropyResult {
  double loss = 0.0;
  Mat grad_logits;
};

// Mean negative log-likelihood over the non-ignored points (label 255 is
// skipped; its gradient rows are zero). Optional per-class weights rescale
// both the loss terms and the normalizer. Throws when every point is ignored.
CrossEntropyResult softmax_cross_entropy(const Mat& logits, const std::vector<uint8_t>& labels,
                                         const Vec* class_weights = nullptr);

}  // namespace kpseg
