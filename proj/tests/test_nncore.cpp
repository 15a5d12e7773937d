#include <doctest.h>

#include "kpseg/cloud.hpp"
#include "kpseg/gradcheck.hpp"
#include "kpseg/gradcheck_suite.hpp"
#include "kpseg/layers.hpp"
#include "kpseg/params.hpp"
#include "kpseg/rng.hpp"

using namespace kpseg;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("unary_conv: identity weights and zero input") {
  Rng rng(1);
  Mat x = random_mat(4, 3, rng);
  Mat b = Mat::Zero(1, 3);
  CHECK((unary_forward(x, Mat::Identity(3, 3), b) - x).cwiseAbs().maxCoeff() == 0.0);

  Mat bias = random_mat(1, 3, rng);
  Mat zero = Mat::Zero(4, 3);
  Mat out = unary_forward(zero, Mat::Identity(3, 3), bias);
  for (int i = 0; i < 4; ++i) CHECK((out.row(i) - bias.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("leaky_relu: degenerate slope and the worked example") {
  Mat x(1, 2);
  x << -2.0, 3.0;
  CHECK((leaky_relu_forward(x, 1.0) - x).cwiseAbs().maxCoeff() == 0.0);
  Mat out = leaky_relu_forward(x, 0.1);
  CHECK(out(0, 0) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(out(0, 1) == 3.0);
}

TEST_CASE("batch_norm: train standardization contract") {
  Rng rng(2);
  Mat x = random_mat(64, 5, rng, 3.0);
  x.array() += 2.0;
  Vec gamma = Vec::Ones(5), beta = Vec::Zero(5);
  BNRunning running(5);
  Mat out = batch_norm_train(x, gamma, beta, running, nullptr);
  for (int c = 0; c < 5; ++c) {
    double mean = out.col(c).mean();
    double var = (out.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
  // running stats moved toward the batch statistics
  CHECK(running.mean.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("batch_norm: eval with identity stats returns the input") {
  Rng rng(3);
  Mat x = random_mat(7, 4, rng);
  BNRunning running(4);  // mean 0, var 1
  Vec gamma = Vec::Ones(4), beta = Vec::Zero(4);
  Mat out = batch_norm_eval(x, gamma, beta, running);
  CHECK((out - x).cwiseAbs().maxCoeff() < 1e-6);  // epsilon-scaled deviation only
}

TEST_CASE("batch_norm: degenerate batch rejected in train mode") {
  Mat x = Mat::Ones(1, 3);
  Vec gamma = Vec::Ones(3), beta = Vec::Zero(3);
  BNRunning running(3);
  CHECK_THROWS_AS(batch_norm_train(x, gamma, beta, running, nullptr), ArgumentError);
}

TEST_CASE("batch_norm: BNState wrapper dispatches on mode") {
  Rng rng(12);
  Mat x = random_mat(6, 2, rng);
  BNState state(2);
  state.mode = BNState::Mode::train;
  Mat train_out = batch_norm(x, state);
  CHECK(std::abs(train_out.col(0).mean()) < 1e-9);
  state.mode = BNState::Mode::eval;
  Mat eval_out = batch_norm(x, state);
  CHECK(eval_out.rows() == 6);
}

TEST_CASE("softmax_cross_entropy: uniform logits give ln C") {
  Mat logits = Mat::Zero(4, 6);
  std::vector<uint8_t> labels{0, 3, 5, 2};
  CrossEntropyResult ce = softmax_cross_entropy(logits, labels);
  CHECK(ce.loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  for (int i = 0; i < 4; ++i) CHECK(std::abs(ce.grad_logits.row(i).sum()) < 1e-12);
}

TEST_CASE("softmax_cross_entropy: saturated one-hot logit") {
  Mat logits = Mat::Zero(1, 6);
  logits(0, 2) = 1000.0;
  CrossEntropyResult ce = softmax_cross_entropy(logits, {2});
  CHECK(ce.loss >= 0.0);
  CHECK(ce.loss < 1e-6);
}

TEST_CASE("softmax_cross_entropy: ignored rows, empty batch, bad labels") {
  Mat logits = Mat::Zero(3, 6);
  std::vector<uint8_t> with_ignore{1, kIgnoreLabel, 4};
  CrossEntropyResult ce = softmax_cross_entropy(logits, with_ignore);
  CHECK(ce.grad_logits.row(1).cwiseAbs().maxCoeff() == 0.0);

  std::vector<uint8_t> all_ignored(3, kIgnoreLabel);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, all_ignored), ArgumentError);
  std::vector<uint8_t> out_of_range{1, 2, 6};
  CHECK_THROWS_AS(softmax_cross_entropy(logits, out_of_range), ArgumentError);
}

TEST_CASE("softmax_cross_entropy: loss is non-negative on random instances") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Mat logits = random_mat(8, 6, rng, 5.0);
    std::vector<uint8_t> labels(8);
    for (auto& l : labels) l = static_cast<uint8_t>(rng.uniform_index(6));
    CHECK(softmax_cross_entropy(logits, labels).loss >= 0.0);
  }
}

TEST_CASE("softmax_cross_entropy: class weights rescale loss and gradient") {
  Rng rng(5);
  Mat logits = random_mat(6, 6, rng, 2.0);
  std::vector<uint8_t> labels{0, 0, 1, 1, 2, 3};
  Vec w = Vec::Ones(6);
  CrossEntropyResult plain = softmax_cross_entropy(logits, labels);
  CrossEntropyResult unit_w = softmax_cross_entropy(logits, labels, &w);
  CHECK(plain.loss == doctest::Approx(unit_w.loss).epsilon(1e-15));

  // uniform scaling of all weights cancels in the weighted mean
  Vec w2 = 2.0 * w;
  CrossEntropyResult scaled = softmax_cross_entropy(logits, labels, &w2);
  CHECK(scaled.loss == doctest::Approx(plain.loss).epsilon(1e-12));
  CHECK((scaled.grad_logits - plain.grad_logits).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("momentum_step: degenerate momentum is plain gradient descent") {
  ParameterStore store;
  Parameter* p = store.create("w", 2, 2);
  p->value << 1.0, 2.0, 3.0, 4.0;
  p->grad << 0.5, 0.5, 0.5, 0.5;
  Mat before = p->value;
  store.momentum_step(0.1, 0.0);
  CHECK((p->value - (before.array() - 0.05).matrix()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("momentum_step: two steps with constant gradient displace by lr*g*(2+m)") {
  ParameterStore store;
  Parameter* p = store.create("w", 1, 1);
  p->value(0, 0) = 10.0;
  const double g = 0.3, lr = 0.01, m = 0.98;
  p->grad(0, 0) = g;
  store.momentum_step(lr, m);
  p->grad(0, 0) = g;
  store.momentum_step(lr, m);
  // v1 = g, v2 = m g + g; total = lr g (2 + m)
  CHECK(10.0 - p->value(0, 0) == doctest::Approx(lr * g * (2.0 + m)).epsilon(1e-12));
}

TEST_CASE("momentum_step: zero gradient still applies the momentum buffer") {
  ParameterStore store;
  Parameter* p = store.create("w", 1, 1);
  p->value(0, 0) = 1.0;
  p->momentum(0, 0) = 2.0;  // v0
  store.momentum_step(0.1, 0.5);
  // v = 0.5 * 2 + 0 = 1; value -= 0.1 * 1
  CHECK(p->value(0, 0) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("momentum_step: non-finite gradient names the parameter") {
  ParameterStore store;
  store.create("fine", 1, 1);
  Parameter* bad = store.create("enc3.u1.conv.w", 1, 1);
  bad->grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(store.momentum_step(0.1, 0.9), doctest::Contains("enc3.u1.conv.w"),
                       DataError);
}

TEST_CASE("finite_diff_check: per-layer suite passes its tolerances") {
  for (const LayerCheck& c : run_gradient_checks(7)) {
    INFO(c.layer << " err=" << c.max_rel_error << " tol=" << c.tolerance);
    CHECK(c.passed());
  }
}
