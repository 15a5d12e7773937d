#pragma once

#include "kpseg/errors.hpp"
#include "kpseg/kernel_points.hpp"
#include "kpseg/matrix.hpp"
#include "kpseg/neighbors.hpp"

namespace kpseg {

// Learnable kernel weights, one C_in x C_out block per kernel point, stored
// stacked as a (K * C_in) x C_out matrix. Non-owning view, valid as long as
// the underlying matrix lives.
struct ConvWeights {
  Eigen::Ref<const Mat> w;
  int kernel_count = 0;
  int in_channels = 0;
  int out_channels = 0;

  ConvWeights(const Mat& stacked, int k)
      : w(stacked),
        kernel_count(k),
        in_channels(static_cast<int>(stacked.rows()) / k),
        out_channels(static_cast<int>(stacked.cols())) {
    if (k < 1 || stacked.rows() % k != 0)
      throw ArgumentError("ConvWeights: row count must be a multiple of K");
  }

  auto block(int k) const { return w.middleRows(static_cast<Eigen::Index>(k) * in_channels, in_channels); }
};

// One convolution instance: M query points gathering features from S support
// points through a neighbor table. `features` has S or S+1 rows; when S+1,
// the last row is the zero shadow row. Shadow neighbors contribute exactly
// zero either way.
struct ConvInput {
  const Points& query_points;
  const Points& support_points;
  const NeighborTable& neighbors;
  const Mat& features;
};

// Linear-correlation influence of each kernel point on each relative
// position: h = max(0, 1 - ||x' - xk|| / d). Values lie in [0, 1] and vanish
// at distance >= d.
Mat kernel_influence(const Mat& rel_pos, const KernelDisposition& kd);

// Influence-weighted neighbor feature sums per kernel point, the M x (K*C_in)
// left factor of the convolution. Row m, block k holds
// sum_i h_{i,k} * f_i over the neighbors of query m.
Mat kpconv_aggregate(const ConvInput& in, const KernelDisposition& kd);

// out[m] = sum_{i in N_m} sum_k h_{i,k} (f_i . W_k), evaluated as
// aggregate(in) * W.
Mat kpconv_forward(const ConvInput& in, const ConvWeights& w, const KernelDisposition& kd);

struct KPConvGrads {
  Mat features;  // same row count as in.features, shadow row zero
  Mat weights;   // (K*C_in) x C_out
};

// Analytic gradients of the convolution. Kernel and point positions are
// constants; only features and weights receive gradients. Pass the cached
// forward aggregate to skip recomputing it.
KPConvGrads kpconv_backward(const ConvInput& in, const ConvWeights& w,
                            const KernelDisposition& kd, const Mat& grad_out,
                            const Mat* cached_aggregate = nullptr);

}  // namespace kpseg
