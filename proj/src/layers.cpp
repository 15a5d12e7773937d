#include "kpseg/layers.hpp"

#include <cmath>

#include "kpseg/cloud.hpp"
#include "kpseg/errors.hpp"

namespace kpseg {

Mat unary_forward(const Mat& x, const Mat& w, const Mat& bias) {
  if (x.cols() != w.rows()) throw ArgumentError("unary_conv: input/weight shape mismatch");
  if (bias.rows() != 1 || bias.cols() != w.cols())
    throw ArgumentError("unary_conv: bias must be 1 x C_out");
  return (x * w).rowwise() + bias.row(0);
}

UnaryGrads unary_backward(const Mat& x, const Mat& w, const Mat& grad_out) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != w.cols())
    throw ArgumentError("unary_conv backward: grad shape mismatch");
  UnaryGrads g;
  g.x = grad_out * w.transpose();
  g.w = x.transpose() * grad_out;
  g.bias = grad_out.colwise().sum();
  return g;
}

Mat leaky_relu_forward(const Mat& x, double slope) {
  return x.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
}

Mat leaky_relu_backward(const Mat& x, const Mat& grad_out, double slope) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != x.cols())
    throw ArgumentError("leaky_relu backward: grad shape mismatch");
  return grad_out.array() * x.unaryExpr([slope](double v) { return v >= 0.0 ? 1.0 : slope; }).array();
}

Mat batch_norm_train(const Mat& x, const Vec& gamma, const Vec& beta, BNRunning& running,
                     BNCache* cache) {
  const Eigen::Index n = x.rows(), c = x.cols();
  if (n < 2) throw ArgumentError("batch_norm: train mode needs N >= 2 (degenerate variance)");
  if (gamma.size() != c || beta.size() != c || running.mean.size() != c)
    throw ArgumentError("batch_norm: channel count mismatch");

  Vec mean = x.colwise().mean();
  Mat centered = x.rowwise() - mean.transpose();
  Vec var = centered.array().square().colwise().mean();  // biased
  Vec inv_std = (var.array() + running.epsilon).sqrt().inverse();

  Mat xhat = centered.array().rowwise() * inv_std.transpose().array();
  Mat out = (xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
            beta.transpose().array();

  running.mean = running.momentum * running.mean + (1.0 - running.momentum) * mean;
  running.var = running.momentum * running.var + (1.0 - running.momentum) * var;

  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Mat batch_norm_eval(const Mat& x, const Vec& gamma, const Vec& beta, const BNRunning& running) {
  if (gamma.size() != x.cols() || running.mean.size() != x.cols())
    throw ArgumentError("batch_norm: channel count mismatch");
  Vec inv_std = (running.var.array() + running.epsilon).sqrt().inverse();
  Mat xhat = (x.rowwise() - running.mean.transpose()).array().rowwise() *
             inv_std.transpose().array();
  return (xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
         beta.transpose().array();
}

BNGrads batch_norm_backward(const Mat& grad_out, const BNCache& cache, const Vec& gamma) {
  const Eigen::Index n = grad_out.rows();
  if (cache.xhat.rows() != n || cache.xhat.cols() != grad_out.cols())
    throw ArgumentError("batch_norm backward: grad shape mismatch");
  BNGrads g;
  g.beta = grad_out.colwise().sum();
  g.gamma = (grad_out.array() * cache.xhat.array()).colwise().sum();

  // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy .* xhat))
  Vec mean_dy = grad_out.colwise().mean();
  Vec mean_dy_xhat = (grad_out.array() * cache.xhat.array()).colwise().mean();
  Mat dxhat = grad_out.rowwise() - mean_dy.transpose();
  dxhat -= (cache.xhat.array().rowwise() * mean_dy_xhat.transpose().array()).matrix();
  g.x = dxhat.array().rowwise() *
        (gamma.array() * cache.inv_std.array()).transpose().array();
  return g;
}

Mat batch_norm(const Mat& x, BNState& state, BNCache* cache) {
  if (state.mode == BNState::Mode::train)
    return batch_norm_train(x, state.gamma, state.beta, state.running, cache);
  return batch_norm_eval(x, state.gamma, state.beta, state.running);
}

Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

CrossEntropyResult softmax_cross_entropy(const Mat& logits, const std::vector<uint8_t>& labels,
                                         const Vec* class_weights) {
  const Eigen::Index n = logits.rows(), c = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ArgumentError("softmax_cross_entropy: label count mismatch");
  if (class_weights && class_weights->size() != c)
    throw ArgumentError("softmax_cross_entropy: class weight count mismatch");

  CrossEntropyResult res;
  res.grad_logits = Mat::Zero(n, c);
  double weight_total = 0.0;
  double loss_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    uint8_t y = labels[i];
    if (y == kIgnoreLabel) continue;
    if (y >= c) throw ArgumentError("softmax_cross_entropy: label out of range");
    double w = class_weights ? (*class_weights)(y) : 1.0;
    double mx = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
    double sum = e.sum();
    loss_sum += w * (std::log(sum) - (logits(i, y) - mx));
    res.grad_logits.row(i) = w * (e / sum).matrix().transpose();
    res.grad_logits(i, y) -= w;
    weight_total += w;
  }
  if (weight_total == 0.0)
    throw ArgumentError("softmax_cross_entropy: every point is ignored");
  res.loss = loss_sum / weight_total;
  res.grad_logits /= weight_total;
  return res;
}

}  // namespace kpseg
