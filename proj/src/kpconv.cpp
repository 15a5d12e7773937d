#include "kpseg/kpconv.hpp"

#include <cmath>

#include "kpseg/errors.hpp"

namespace kpseg {

namespace {

void check_shapes(const ConvInput& in, const ConvWeights& w, const KernelDisposition& kd) {
  const size_t s = in.support_points.size();
  const Eigen::Index rows = in.features.rows();
  if (rows != static_cast<Eigen::Index>(s) && rows != static_cast<Eigen::Index>(s + 1))
    throw ArgumentError("kpconv: features must have S or S+1 rows");
  if (rows == static_cast<Eigen::Index>(s + 1) && s > 0 &&
      in.features.row(rows - 1).cwiseAbs().maxCoeff() != 0.0)
    throw ArgumentError("kpconv: shadow feature row must be zero");
  if (in.features.cols() != w.in_channels)
    throw ArgumentError("kpconv: feature width does not match weights");
  if (kd.count() != w.kernel_count)
    throw ArgumentError("kpconv: kernel point count does not match weights");
  if (in.neighbors.num_supports != s)
    throw ArgumentError("kpconv: neighbor table does not match supports");
  if (in.neighbors.num_queries() != in.query_points.size())
    throw ArgumentError("kpconv: neighbor table does not match queries");
  double dr = std::abs(in.neighbors.radius - kd.radius);
  if (dr > 1e-9 * std::max(1.0, kd.radius))
    throw ArgumentError("kpconv: neighbor radius does not match kernel disposition radius");
}

}  // namespace

Mat kernel_influence(const Mat& rel_pos, const KernelDisposition& kd) {
  if (rel_pos.cols() != 3) throw ArgumentError("kernel_influence: rel_pos must be n x 3");
  const Eigen::Index n = rel_pos.rows();
  const int k = kd.count();
  Mat h = Mat::Zero(n, k);
  const double d = kd.influence;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      double dx = rel_pos(i, 0) - kd.points[j].x;
      double dy = rel_pos(i, 1) - kd.points[j].y;
      double dz = rel_pos(i, 2) - kd.points[j].z;
      double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (dist < d) h(i, j) = 1.0 - dist / d;
    }
  }
  return h;
}

Mat kpconv_aggregate(const ConvInput& in, const KernelDisposition& kd) {
  const int c_in = static_cast<int>(in.features.cols());
  const int k = kd.count();
  const size_t m_count = in.query_points.size();
  const uint32_t shadow = in.neighbors.shadow_index();
  const double d = kd.influence;
  const double d2 = d * d;

  Mat af = Mat::Zero(m_count, static_cast<Eigen::Index>(k) * c_in);
  for (size_t m = 0; m < m_count; ++m) {
    const uint32_t* row = in.neighbors.row(m);
    const Vec3& q = in.query_points[m];
    double* af_row = af.data() + m * af.cols();
    for (uint32_t slot = 0; slot < in.neighbors.width; ++slot) {
      uint32_t i = row[slot];
      if (i == shadow) break;  // padding is trailing
      Vec3 rel = in.support_points[i] - q;
      const double* f = in.features.data() + static_cast<size_t>(i) * c_in;
      for (int kk = 0; kk < k; ++kk) {
        double dx = rel.x - kd.points[kk].x;
        double dy = rel.y - kd.points[kk].y;
        double dz = rel.z - kd.points[kk].z;
        double dist2 = dx * dx + dy * dy + dz * dz;
        if (dist2 >= d2) continue;
        double h = 1.0 - std::sqrt(dist2) / d;
        double* out = af_row + kk * c_in;
        for (int c = 0; c < c_in; ++c) out[c] += h * f[c];
      }
    }
  }
  return af;
}

Mat kpconv_forward(const ConvInput& in, const ConvWeights& w, const KernelDisposition& kd) {
  check_shapes(in, w, kd);
  Mat af = kpconv_aggregate(in, kd);
  return af * w.w;
}

KPConvGrads kpconv_backward(const ConvInput& in, const ConvWeights& w,
                            const KernelDisposition& kd, const Mat& grad_out,
                            const Mat* cached_aggregate) {
  check_shapes(in, w, kd);
  if (grad_out.rows() != static_cast<Eigen::Index>(in.query_points.size()) ||
      grad_out.cols() != w.out_channels)
    throw ArgumentError("kpconv_backward: grad_out shape mismatch");

  const int c_in = w.in_channels;
  const int k = w.kernel_count;
  const size_t m_count = in.query_points.size();
  const uint32_t shadow = in.neighbors.shadow_index();
  const double d = kd.influence;
  const double d2 = d * d;

  KPConvGrads grads;
  if (cached_aggregate) {
    grads.weights = cached_aggregate->transpose() * grad_out;
  } else {
    grads.weights = kpconv_aggregate(in, kd).transpose() * grad_out;
  }

  // grad wrt the aggregate factor, then scatter through the influence values
  Mat grad_af = grad_out * w.w.transpose();  // M x (K*C_in)
  grads.features = Mat::Zero(in.features.rows(), c_in);
  for (size_t m = 0; m < m_count; ++m) {
    const uint32_t* row = in.neighbors.row(m);
    const Vec3& q = in.query_points[m];
    const double* ga_row = grad_af.data() + m * grad_af.cols();
    for (uint32_t slot = 0; slot < in.neighbors.width; ++slot) {
      uint32_t i = row[slot];
      if (i == shadow) break;
      Vec3 rel = in.support_points[i] - q;
      double* gf = grads.features.data() + static_cast<size_t>(i) * c_in;
      for (int kk = 0; kk < k; ++kk) {
        double dx = rel.x - kd.points[kk].x;
        double dy = rel.y - kd.points[kk].y;
        double dz = rel.z - kd.points[kk].z;
        double dist2 = dx * dx + dy * dy + dz * dz;
        if (dist2 >= d2) continue;
        double h = 1.0 - std::sqrt(dist2) / d;
        const double* ga = ga_row + kk * c_in;
        for (int c = 0; c < c_in; ++c) gf[c] += h * ga[c];
      }
    }
  }
  return grads;
}

}  // namespace kpseg
