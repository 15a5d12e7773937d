#include "kpseg/gradcheck_suite.hpp"

#include "kpseg/network.hpp"
#include "kpseg/rng.hpp"

namespace kpseg {

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.uniform(-1.0, 1.0);
  return m;
}

Points random_points(size_t n, Rng& rng, double extent) {
  Points pts(n);
  for (Vec3& p : pts)
    p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
  return pts;
}

LayerCheck check_unary(Rng& rng) {
  Mat x = random_mat(5, 3, rng);
  Mat w = random_mat(3, 2, rng);
  Mat b = random_mat(1, 2, rng);
  Mat probe = random_mat(5, 2, rng);
  auto eval = [&]() { return (unary_forward(x, w, b).array() * probe.array()).sum(); };
  UnaryGrads g = unary_backward(x, w, probe);
  auto report = finite_diff_check(
      eval, {grad_target("x", x, g.x), grad_target("w", w, g.w), grad_target("b", b, g.bias)});
  return {"unary_conv", report.max_rel_error, 1e-8};
}

LayerCheck check_leaky_relu(Rng& rng) {
  Mat x = random_mat(6, 4, rng);
  // keep probes away from the kink at 0
  x = x.unaryExpr([](double v) { return std::abs(v) < 0.1 ? v + 0.2 : v; });
  Mat probe = random_mat(6, 4, rng);
  auto eval = [&]() { return (leaky_relu_forward(x, 0.1).array() * probe.array()).sum(); };
  Mat gx = leaky_relu_backward(x, probe, 0.1);
  auto report = finite_diff_check(eval, {grad_target("x", x, gx)});
  return {"leaky_relu", report.max_rel_error, 1e-9};
}

LayerCheck check_batch_norm(Rng& rng) {
  Mat x = random_mat(8, 4, rng);
  Mat gamma = random_mat(1, 4, rng, 0.5);
  gamma.array() += 1.0;
  Mat beta = random_mat(1, 4, rng);
  Mat probe = random_mat(8, 4, rng);
  auto eval = [&]() {
    BNRunning running(4);
    return (batch_norm_train(x, gamma.row(0).transpose(), beta.row(0).transpose(), running,
                             nullptr)
                .array() *
            probe.array())
        .sum();
  };
  BNRunning running(4);
  BNCache cache;
  batch_norm_train(x, gamma.row(0).transpose(), beta.row(0).transpose(), running, &cache);
  BNGrads g = batch_norm_backward(probe, cache, gamma.row(0).transpose());
  Mat ggamma = g.gamma.transpose(), gbeta = g.beta.transpose();
  auto report = finite_diff_check(eval, {grad_target("x", x, g.x),
                                         grad_target("gamma", gamma, ggamma),
                                         grad_target("beta", beta, gbeta)});
  return {"batch_norm", report.max_rel_error, 1e-5};
}

LayerCheck check_softmax_ce(Rng& rng) {
  Mat logits = random_mat(10, 6, rng, 2.0);
  std::vector<uint8_t> labels(10);
  for (auto& l : labels) l = static_cast<uint8_t>(rng.uniform_index(6));
  labels[3] = kIgnoreLabel;  // exercise the ignore path
  auto eval = [&]() { return softmax_cross_entropy(logits, labels).loss; };
  CrossEntropyResult ce = softmax_cross_entropy(logits, labels);
  auto report = finite_diff_check(eval, {grad_target("logits", logits, ce.grad_logits)});
  return {"softmax_cross_entropy", report.max_rel_error, 1e-6};
}

LayerCheck check_kpconv(Rng& rng) {
  const int k = 15, c = 3;
  const size_t m = 4, s = 6;
  Points queries = random_points(m, rng, 0.5);
  Points supports = random_points(s, rng, 0.5);
  KernelDisposition kd = generate_kernel_points(k, 1.2, 3);
  NeighborTable nbrs = radius_search(queries, supports, kd.radius, 8);
  Mat feats = Mat::Zero(s + 1, c);
  feats.topRows(s) = random_mat(s, c, rng);
  Mat w = random_mat(k * c, c, rng);
  Mat probe = random_mat(m, c, rng);

  auto eval = [&]() {
    ConvInput in{queries, supports, nbrs, feats};
    return (kpconv_forward(in, ConvWeights(w, k), kd).array() * probe.array()).sum();
  };
  ConvInput in{queries, supports, nbrs, feats};
  KPConvGrads g = kpconv_backward(in, ConvWeights(w, k), kd, probe);
  // the shadow row stays zero and is excluded from the probe targets
  GradCheckTarget feat_target{"features", feats.data(), g.features.data(),
                              static_cast<size_t>(s * c)};
  auto report = finite_diff_check(eval, {feat_target, grad_target("weights", w, g.weights)});
  return {"kpconv", report.max_rel_error, 1e-6};
}

LayerCheck check_stacked_block(Rng& rng) {
  const int k = 15, in_ch = 2, out_ch = 3, depth = 3;
  Points pts = random_points(12, rng, 0.4);
  KernelDisposition kd = generate_kernel_points(k, 0.6, 3);
  NeighborTable nbrs = radius_search(pts, pts, kd.radius, 10);

  ParameterStore store;
  StackedBlock block(store, "blk", depth, in_ch, out_ch, k, 0.98, 1e-6);
  Rng wrng(11);
  for (ConvUnit& u : block.units())
    for (Eigen::Index i = 0; i < u.weights->value.size(); ++i)
      u.weights->value.data()[i] = wrng.uniform(-0.5, 0.5);

  Mat x = random_mat(12, in_ch, rng);
  Mat probe = random_mat(12, out_ch, rng);
  auto eval = [&]() {
    StackedBlock fresh = block;  // copies parameters pointers; state is per-call
    return (fresh.forward(pts, nbrs, kd, x, true, 0.1).array() * probe.array()).sum();
  };
  block.forward(pts, nbrs, kd, x, true, 0.1);
  store.zero_grads();
  Mat gx = block.backward(pts, nbrs, kd, probe, 0.1);

  std::vector<GradCheckTarget> targets{grad_target("x", x, gx)};
  for (auto& p : store.all()) targets.push_back(grad_target(p->name, p->value, p->grad));
  auto report = finite_diff_check(eval, targets);
  return {"stacked_block", report.max_rel_error, 1e-4};
}

LayerCheck check_micro_network(Rng& rng) {
  NetworkConfig cfg;
  cfg.num_layers = 2;
  cfg.radii = {0.3, 0.6};
  cfg.cell_sizes = {0.3, 0.6};
  cfg.channels = {4, 8};
  cfg.stack_depth = 2;
  cfg.sphere_radius = 2.0;
  cfg.batch_spheres = 1;
  cfg.max_neighbors = 12;
  Network net(cfg, 5);

  LabeledCloud cloud;
  for (int i = 0; i < 24; ++i) {
    cloud.coords.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                            rng.uniform(-0.3, 0.3)});
    cloud.labels.push_back(static_cast<uint8_t>(rng.uniform_index(6)));
  }
  MultiscaleBatch batch = build_pyramid(cloud, cfg);

  auto eval = [&]() {
    Mat logits = net.forward(batch, true);
    return softmax_cross_entropy(logits, batch.labels).loss;
  };
  Mat logits = net.forward(batch, true);
  CrossEntropyResult ce = softmax_cross_entropy(logits, batch.labels);
  net.params().zero_grads();
  net.backward(batch, ce.grad_logits);

  std::vector<GradCheckTarget> targets;
  for (auto& p : net.params().all()) targets.push_back(grad_target(p->name, p->value, p->grad));
  auto report = finite_diff_check(eval, targets);
  return {"micro_network", report.max_rel_error, 1e-4};
}

}  // namespace

std::vector<LayerCheck> run_gradient_checks(uint64_t seed) {
  Rng rng(seed);
  std::vector<LayerCheck> checks;
  checks.push_back(check_unary(rng));
  checks.push_back(check_leaky_relu(rng));
  checks.push_back(check_batch_norm(rng));
  checks.push_back(check_softmax_ce(rng));
  checks.push_back(check_kpconv(rng));
  checks.push_back(check_stacked_block(rng));
  checks.push_back(check_micro_network(rng));
  return checks;
}

}  // namespace kpseg
