#include "kpseg/network.hpp"

#include <algorithm>
#include <cmath>

#include "kpseg/errors.hpp"
#include "kpseg/grid.hpp"
#include "kpseg/neighbors.hpp"

namespace kpseg {

void NetworkConfig::validate() const {
  if (num_layers < 1) throw ArgumentError("config: num_layers must be >= 1");
  if (static_cast<int>(radii.size()) != num_layers)
    throw ArgumentError("config: radii length must equal num_layers");
  if (static_cast<int>(cell_sizes.size()) != num_layers)
    throw ArgumentError("config: cell_sizes length must equal num_layers");
  if (static_cast<int>(channels.size()) != num_layers)
    throw ArgumentError("config: channels length must equal num_layers");
  for (int l = 0; l < num_layers; ++l) {
    if (radii[l] <= 0.0 || cell_sizes[l] <= 0.0)
      throw ArgumentError("config: radii and cell_sizes must be > 0");
    if (l > 0 && radii[l] <= radii[l - 1])
      throw ArgumentError("config: radii must be strictly increasing");
    if (channels[l] < 1) throw ArgumentError("config: channels must be >= 1");
  }
  if (stack_depth < 1) throw ArgumentError("config: stack_depth must be >= 1");
  if (num_classes < 2) throw ArgumentError("config: num_classes must be >= 2");
  if (sphere_radius <= 0.0) throw ArgumentError("config: sphere_radius must be > 0");
  if (batch_spheres < 1) throw ArgumentError("config: batch_spheres must be >= 1");
  if (kernel_points < 2) throw ArgumentError("config: kernel_points must be >= 2");
  if (influence_ratio <= 0.0) throw ArgumentError("config: influence_ratio must be > 0");
  if (neighbor_radius_mult <= 0.0) throw ArgumentError("config: neighbor_radius_mult must be > 0");
  if (max_neighbors < 1) throw ArgumentError("config: max_neighbors must be >= 1");
}

void MultiscaleBatch::translate(const Vec3& t) {
  for (Layer& layer : layers)
    for (Vec3& p : layer.points) p += t;
}

std::vector<uint32_t> nearest_indices(const Points& queries, const Points& supports) {
  if (supports.empty()) throw ArgumentError("nearest_indices: empty supports");
  Aabb box = bounding_box(supports);
  double span = std::max({box.hi.x - box.lo.x, box.hi.y - box.lo.y, box.hi.z - box.lo.z, 1e-9});
  double cell = span / std::max(1.0, std::cbrt(static_cast<double>(supports.size())));
  GridIndex grid(supports, cell);
  CellKey lo_cell = cell_of(box.lo, cell);
  CellKey hi_cell = cell_of(box.hi, cell);

  std::vector<uint32_t> out(queries.size());
  for (size_t m = 0; m < queries.size(); ++m) {
    const Vec3& q = queries[m];
    CellKey qc = cell_of(q, cell);
    // farthest occupied cell in Chebyshev distance bounds the search
    int64_t ring_limit = 0;
    ring_limit = std::max(ring_limit, std::max(qc.x - lo_cell.x, hi_cell.x - qc.x));
    ring_limit = std::max(ring_limit, std::max(qc.y - lo_cell.y, hi_cell.y - qc.y));
    ring_limit = std::max(ring_limit, std::max(qc.z - lo_cell.z, hi_cell.z - qc.z));

    double best_d2 = std::numeric_limits<double>::infinity();
    uint32_t best = 0;
    for (int64_t ring = 0; ring <= ring_limit; ++ring) {
      // cells at Chebyshev distance >= ring are at least (ring-1)*cell away
      if (ring > 0) {
        double safe = static_cast<double>(ring - 1) * cell;
        if (best_d2 <= safe * safe) break;
      }
      for (int64_t dx = -ring; dx <= ring; ++dx)
        for (int64_t dy = -ring; dy <= ring; ++dy)
          for (int64_t dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const std::vector<uint32_t>* bucket = grid.cell({qc.x + dx, qc.y + dy, qc.z + dz});
            if (!bucket) continue;
            for (uint32_t s : *bucket) {
              double d2 = squared_norm(supports[s] - q);
              if (d2 < best_d2 || (d2 == best_d2 && s < best)) {
                best_d2 = d2;
                best = s;
              }
            }
          }
    }
    out[m] = best;
  }
  return out;
}

Mat upsample_nearest(const Mat& coarse, const std::vector<uint32_t>& upsample) {
  Mat out(static_cast<Eigen::Index>(upsample.size()), coarse.cols());
  for (size_t i = 0; i < upsample.size(); ++i) {
    if (static_cast<Eigen::Index>(upsample[i]) >= coarse.rows())
      throw ArgumentError("upsample_nearest: index out of range");
    out.row(i) = coarse.row(upsample[i]);
  }
  return out;
}

namespace {

LabeledCloud cloud_from_points(Points pts) {
  LabeledCloud c;
  c.coords = std::move(pts);
  return c;
}

// Pyramid for one sphere, local indexing.
std::vector<MultiscaleBatch::Layer> sphere_pyramid(const LabeledCloud& sphere,
                                                   const NetworkConfig& cfg) {
  if (sphere.size() == 0) throw ArgumentError("build_pyramid: layer 0 is empty");
  const int L = cfg.num_layers;
  std::vector<MultiscaleBatch::Layer> layers(L);
  layers[0].points = sphere.coords;
  for (int l = 1; l < L; ++l) {
    LabeledCloud sub = grid_subsample(cloud_from_points(layers[l - 1].points),
                                      cfg.cell_sizes[l], LabelMode::none);
    if (sub.size() == 0)
      throw ArgumentError("build_pyramid: layer " + std::to_string(l) + " is empty");
    layers[l].points = std::move(sub.coords);
  }
  for (int l = 0; l < L; ++l) {
    layers[l].neighbors = radius_search(layers[l].points, layers[l].points, cfg.conv_radius(l),
                                        cfg.max_neighbors);
    if (l + 1 < L) {
      layers[l].pool = radius_search(layers[l + 1].points, layers[l].points,
                                     cfg.conv_radius(l + 1), cfg.max_neighbors);
      layers[l].upsample = nearest_indices(layers[l].points, layers[l + 1].points);
    }
  }
  return layers;
}

// Stacks per-sphere tables into one index space. Non-shadow entries shift by
// the sphere's support offset; shadow entries map to the merged shadow.
NeighborTable merge_tables(const std::vector<const NeighborTable*>& tables,
                           const std::vector<uint32_t>& support_offsets, uint32_t total_supports) {
  NeighborTable merged;
  merged.num_supports = total_supports;
  merged.radius = tables.empty() ? 0.0 : tables[0]->radius;
  uint32_t width = 1;
  size_t rows = 0;
  for (const NeighborTable* t : tables) {
    width = std::max(width, t->width);
    rows += t->num_queries();
  }
  merged.width = width;
  merged.indices.assign(rows * width, total_supports);
  size_t row_out = 0;
  for (size_t s = 0; s < tables.size(); ++s) {
    const NeighborTable& t = *tables[s];
    for (size_t m = 0; m < t.num_queries(); ++m, ++row_out) {
      const uint32_t* src = t.row(m);
      uint32_t* dst = merged.indices.data() + row_out * width;
      for (uint32_t j = 0; j < t.width; ++j) {
        if (src[j] == t.num_supports) break;
        dst[j] = src[j] + support_offsets[s];
      }
    }
  }
  return merged;
}

}  // namespace

MultiscaleBatch build_pyramid(const std::vector<LabeledCloud>& spheres,
                              const NetworkConfig& cfg) {
  cfg.validate();
  if (spheres.empty()) throw ArgumentError("build_pyramid: no spheres");
  const int L = cfg.num_layers;

  std::vector<std::vector<MultiscaleBatch::Layer>> per_sphere;
  per_sphere.reserve(spheres.size());
  for (const LabeledCloud& s : spheres) per_sphere.push_back(sphere_pyramid(s, cfg));

  MultiscaleBatch batch;
  batch.layers.resize(L);
  for (const LabeledCloud& s : spheres) batch.sphere_lengths.push_back(s.size());

  for (int l = 0; l < L; ++l) {
    MultiscaleBatch::Layer& out = batch.layers[l];
    std::vector<uint32_t> offsets(spheres.size()), next_offsets(spheres.size());
    uint32_t total = 0, next_total = 0;
    for (size_t s = 0; s < spheres.size(); ++s) {
      offsets[s] = total;
      total += static_cast<uint32_t>(per_sphere[s][l].points.size());
      if (l + 1 < L) {
        next_offsets[s] = next_total;
        next_total += static_cast<uint32_t>(per_sphere[s][l + 1].points.size());
      }
    }
    out.points.reserve(total);
    for (size_t s = 0; s < spheres.size(); ++s)
      out.points.insert(out.points.end(), per_sphere[s][l].points.begin(),
                        per_sphere[s][l].points.end());

    std::vector<const NeighborTable*> nbrs, pools;
    for (size_t s = 0; s < spheres.size(); ++s) nbrs.push_back(&per_sphere[s][l].neighbors);
    out.neighbors = merge_tables(nbrs, offsets, total);

    if (l + 1 < L) {
      for (size_t s = 0; s < spheres.size(); ++s) pools.push_back(&per_sphere[s][l].pool);
      out.pool = merge_tables(pools, offsets, total);
      out.upsample.reserve(total);
      for (size_t s = 0; s < spheres.size(); ++s)
        for (uint32_t u : per_sphere[s][l].upsample) out.upsample.push_back(u + next_offsets[s]);
    }
  }

  for (const LabeledCloud& s : spheres) {
    if (s.has_labels())
      batch.labels.insert(batch.labels.end(), s.labels.begin(), s.labels.end());
    else
      batch.labels.insert(batch.labels.end(), s.size(), kIgnoreLabel);
    if (cfg.use_intensity) {
      if (s.has_intensity())
        batch.intensity.insert(batch.intensity.end(), s.intensity.begin(), s.intensity.end());
      else
        batch.intensity.insert(batch.intensity.end(), s.size(), 0.0);
    }
  }
  bool any_real_label = false;
  for (const LabeledCloud& s : spheres) any_real_label |= s.has_labels();
  if (!any_real_label) batch.labels.clear();
  return batch;
}

MultiscaleBatch build_pyramid(const LabeledCloud& batch, const NetworkConfig& cfg) {
  return build_pyramid(std::vector<LabeledCloud>{batch}, cfg);
}

// ---- units and blocks -------------------------------------------------------

Mat ConvUnit::forward(const Points& queries, const Points& supports, const NeighborTable& nbrs,
                      const KernelDisposition& kd, const Mat& x, bool train, double slope) {
  Mat normalized;
  if (train)
    normalized = batch_norm_train(x, gamma->value.row(0).transpose(), beta->value.row(0).transpose(),
                                  running, &bn_cache);
  else
    normalized = batch_norm_eval(x, gamma->value.row(0).transpose(), beta->value.row(0).transpose(),
                                 running);
  ConvInput in{queries, supports, nbrs, normalized};
  ConvWeights w(weights->value, kd.count());
  Mat conv;
  if (train) {
    aggregate = kpconv_aggregate(in, kd);
    conv = aggregate * w.w;
    bn_out = std::move(normalized);
    conv_out = conv;
  } else {
    conv = kpconv_forward(in, w, kd);
  }
  return leaky_relu_forward(conv, slope);
}

Mat ConvUnit::backward(const Points& queries, const Points& supports, const NeighborTable& nbrs,
                       const KernelDisposition& kd, const Mat& grad_out, double slope) {
  Mat grad_conv = leaky_relu_backward(conv_out, grad_out, slope);
  ConvInput in{queries, supports, nbrs, bn_out};
  ConvWeights w(weights->value, kd.count());
  KPConvGrads kg = kpconv_backward(in, w, kd, grad_conv, &aggregate);
  weights->grad += kg.weights;
  BNGrads bg = batch_norm_backward(kg.features, bn_cache, gamma->value.row(0).transpose());
  gamma->grad.row(0) += bg.gamma.transpose();
  beta->grad.row(0) += bg.beta.transpose();
  return std::move(bg.x);
}

StackedBlock::StackedBlock(ParameterStore& store, const std::string& prefix, int depth,
                           int in_channels, int out_channels, int kernel_count,
                           double bn_momentum, double bn_epsilon) {
  units_.resize(depth);
  for (int j = 0; j < depth; ++j) {
    ConvUnit& u = units_[j];
    u.in_channels = j == 0 ? in_channels : out_channels;
    u.out_channels = out_channels;
    std::string base = prefix + ".u" + std::to_string(j);
    u.gamma = store.create(base + ".bn.gamma", 1, u.in_channels);
    u.gamma->value.setOnes();
    // beta starts at 1, not 0: the constant-ones input channel has zero
    // variance, so the first normalization yields exactly beta -- a zero
    // start would park every convolution output on the LeakyReLU kink and
    // feed the first kernel convolution all-zero features
    u.beta = store.create(base + ".bn.beta", 1, u.in_channels);
    u.beta->value.setOnes();
    u.weights = store.create(base + ".conv.w", static_cast<Eigen::Index>(kernel_count) * u.in_channels,
                             u.out_channels, {kernel_count, u.in_channels, u.out_channels});
    u.running = BNRunning(u.in_channels);
    u.running.momentum = bn_momentum;
    u.running.epsilon = bn_epsilon;
  }
}

Mat StackedBlock::forward(const Points& points, const NeighborTable& nbrs,
                          const KernelDisposition& kd, const Mat& x, bool train, double slope) {
  Mat h = x;
  for (ConvUnit& u : units_) h = u.forward(points, points, nbrs, kd, h, train, slope);
  return h;
}

Mat StackedBlock::backward(const Points& points, const NeighborTable& nbrs,
                           const KernelDisposition& kd, const Mat& grad_out, double slope) {
  Mat g = grad_out;
  for (auto it = units_.rbegin(); it != units_.rend(); ++it)
    g = it->backward(points, points, nbrs, kd, g, slope);
  return g;
}

// ---- network ----------------------------------------------------------------

namespace {

void glorot_init(Mat& m, Rng& rng, double fan_in, double fan_out) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-a, a);
}

}  // namespace

Network::Network(const NetworkConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const int L = cfg_.num_layers;
  Rng init_rng(init_seed);
  train_rng = Rng(init_seed ^ 0x9E3779B97F4A7C15ull);

  dispositions_.reserve(L);
  for (int l = 0; l < L; ++l)
    dispositions_.push_back(generate_kernel_points(cfg_.kernel_points, cfg_.conv_radius(l),
                                                   cfg_.kernel_seed, cfg_.influence_ratio));

  blocks_.resize(L);
  pools_.resize(L - 1);
  decoder_.resize(L - 1);
  for (int l = 0; l < L; ++l) {
    int in_ch = l == 0 ? cfg_.first_feature_dim() : cfg_.channels[l];
    blocks_[l] = StackedBlock(params_, "enc" + std::to_string(l), cfg_.stack_depth, in_ch,
                              cfg_.channels[l], cfg_.kernel_points, cfg_.bn_momentum,
                              cfg_.bn_epsilon);
    if (l + 1 < L) {
      pools_[l].weights = params_.create(
          "pool" + std::to_string(l) + ".conv.w",
          static_cast<Eigen::Index>(cfg_.kernel_points) * cfg_.channels[l], cfg_.channels[l + 1],
          {cfg_.kernel_points, cfg_.channels[l], cfg_.channels[l + 1]});
    }
  }
  for (int l = 0; l < L - 1; ++l) {
    int cat_ch = cfg_.channels[l + 1] + cfg_.channels[l];
    std::string base = "dec" + std::to_string(l);
    decoder_[l].gamma = params_.create(base + ".bn.gamma", 1, cat_ch);
    decoder_[l].gamma->value.setOnes();
    decoder_[l].beta = params_.create(base + ".bn.beta", 1, cat_ch);
    decoder_[l].w = params_.create(base + ".w", cat_ch, cfg_.channels[l]);
    decoder_[l].b = params_.create(base + ".b", 1, cfg_.channels[l]);
    decoder_[l].running = BNRunning(cat_ch);
    decoder_[l].running.momentum = cfg_.bn_momentum;
    decoder_[l].running.epsilon = cfg_.bn_epsilon;
  }
  head_.w = params_.create("head.w", cfg_.channels[0], cfg_.num_classes);
  head_.b = params_.create("head.b", 1, cfg_.num_classes);

  // initialization: BN affine stays (1, 0); weights Glorot-style with the
  // kernel dimension folded into the fan-in
  for (int l = 0; l < L; ++l) {
    for (ConvUnit& u : blocks_[l].units())
      glorot_init(u.weights->value, init_rng,
                  static_cast<double>(cfg_.kernel_points) * u.in_channels, u.out_channels);
    if (l + 1 < L)
      glorot_init(pools_[l].weights->value, init_rng,
                  static_cast<double>(cfg_.kernel_points) * cfg_.channels[l],
                  cfg_.channels[l + 1]);
  }
  for (int l = 0; l < L - 1; ++l)
    glorot_init(decoder_[l].w->value, init_rng, decoder_[l].w->value.rows(),
                decoder_[l].w->value.cols());
  glorot_init(head_.w->value, init_rng, head_.w->value.rows(), head_.w->value.cols());
}

Mat Network::forward(const MultiscaleBatch& batch, bool train) {
  const int L = cfg_.num_layers;
  if (static_cast<int>(batch.layers.size()) != L)
    throw ArgumentError("network_forward: batch layer count does not match config");
  const size_t n0 = batch.layers[0].points.size();

  Mat feats = Mat::Ones(n0, cfg_.first_feature_dim());
  if (cfg_.use_intensity) {
    if (batch.intensity.size() != n0)
      throw ArgumentError("network_forward: batch has no intensity but config uses it");
    for (size_t i = 0; i < n0; ++i) feats(i, 1) = batch.intensity[i];
  }

  skip_cache_.assign(L, Mat());
  pool_in_cache_.assign(L, Mat());
  last_batch_ = &batch;

  for (int l = 0; l < L; ++l) {
    const MultiscaleBatch::Layer& layer = batch.layers[l];
    feats = blocks_[l].forward(layer.points, layer.neighbors, dispositions_[l], feats, train,
                               cfg_.leaky_slope);
    skip_cache_[l] = feats;
    if (l + 1 < L) {
      const MultiscaleBatch::Layer& next = batch.layers[l + 1];
      ConvInput in{next.points, layer.points, layer.pool, skip_cache_[l]};
      ConvWeights w(pools_[l].weights->value, cfg_.kernel_points);
      if (train) {
        pools_[l].aggregate = kpconv_aggregate(in, dispositions_[l + 1]);
        feats = pools_[l].aggregate * w.w;
      } else {
        feats = kpconv_forward(in, w, dispositions_[l + 1]);
      }
    }
  }

  // decoder: coarsest to finest
  Mat d = skip_cache_[L - 1];
  for (int l = L - 2; l >= 0; --l) {
    DecoderStage& stage = decoder_[l];
    Mat up = upsample_nearest(d, batch.layers[l].upsample);
    Mat cat(up.rows(), up.cols() + skip_cache_[l].cols());
    cat << up, skip_cache_[l];
    Mat normalized;
    if (train)
      normalized = batch_norm_train(cat, stage.gamma->value.row(0).transpose(),
                                    stage.beta->value.row(0).transpose(), stage.running,
                                    &stage.bn_cache);
    else
      normalized = batch_norm_eval(cat, stage.gamma->value.row(0).transpose(),
                                   stage.beta->value.row(0).transpose(), stage.running);
    Mat lin = unary_forward(normalized, stage.w->value, stage.b->value);
    d = leaky_relu_forward(lin, cfg_.leaky_slope);
    if (train) {
      stage.bn_out = std::move(normalized);
      stage.lin_out = std::move(lin);
    }
  }
  if (train) head_in_cache_ = d;
  Mat logits = unary_forward(d, head_.w->value, head_.b->value);
  if (!logits.allFinite()) throw DataError("network_forward: non-finite logits");
  return logits;
}

void Network::backward(const MultiscaleBatch& batch, const Mat& grad_logits) {
  if (last_batch_ != &batch)
    throw ArgumentError("network backward: batch does not match the last forward pass");
  const int L = cfg_.num_layers;

  UnaryGrads hg = unary_backward(head_in_cache_, head_.w->value, grad_logits);
  head_.w->grad += hg.w;
  head_.b->grad += hg.bias;
  Mat grad_d = std::move(hg.x);

  // decoder backward, fine to coarse; grad on skips accumulates here
  std::vector<Mat> grad_skip(L);
  for (int l = 0; l <= L - 2; ++l) {
    DecoderStage& stage = decoder_[l];
    Mat grad_lin = leaky_relu_backward(stage.lin_out, grad_d, cfg_.leaky_slope);
    UnaryGrads dg = unary_backward(stage.bn_out, stage.w->value, grad_lin);
    stage.w->grad += dg.w;
    stage.b->grad += dg.bias;
    BNGrads bg = batch_norm_backward(dg.x, stage.bn_cache, stage.gamma->value.row(0).transpose());
    stage.gamma->grad.row(0) += bg.gamma.transpose();
    stage.beta->grad.row(0) += bg.beta.transpose();
    Eigen::Index up_cols = cfg_.channels[l + 1];
    Mat grad_up = bg.x.leftCols(up_cols);
    grad_skip[l] = bg.x.rightCols(bg.x.cols() - up_cols);
    // upsample backward: scatter-add rows to the coarse layer
    Mat g_next = Mat::Zero(batch.layers[l + 1].points.size(), up_cols);
    const std::vector<uint32_t>& ups = batch.layers[l].upsample;
    for (size_t i = 0; i < ups.size(); ++i) g_next.row(ups[i]) += grad_up.row(i);
    grad_d = std::move(g_next);
  }
  grad_skip[L - 1] = std::move(grad_d);

  // encoder backward, coarse to fine
  Mat grad_feats;
  for (int l = L - 1; l >= 0; --l) {
    const MultiscaleBatch::Layer& layer = batch.layers[l];
    Mat total = std::move(grad_skip[l]);
    if (l + 1 < L) {
      const MultiscaleBatch::Layer& next = batch.layers[l + 1];
      ConvInput in{next.points, layer.points, layer.pool, skip_cache_[l]};
      ConvWeights w(pools_[l].weights->value, cfg_.kernel_points);
      KPConvGrads pg = kpconv_backward(in, w, dispositions_[l + 1], grad_feats,
                                       &pools_[l].aggregate);
      pools_[l].weights->grad += pg.weights;
      total += pg.features;
    }
    grad_feats = blocks_[l].backward(layer.points, layer.neighbors, dispositions_[l], total,
                                     cfg_.leaky_slope);
  }
  // grad_feats now holds d(loss)/d(input features); inputs are constants
}

std::vector<std::pair<std::string, Vec*>> Network::state_records() {
  std::vector<std::pair<std::string, Vec*>> out;
  for (int l = 0; l < cfg_.num_layers; ++l) {
    auto& units = blocks_[l].units();
    for (size_t j = 0; j < units.size(); ++j) {
      std::string base = "enc" + std::to_string(l) + ".u" + std::to_string(j) + ".bn.";
      out.emplace_back(base + "running_mean", &units[j].running.mean);
      out.emplace_back(base + "running_var", &units[j].running.var);
    }
  }
  for (int l = 0; l < cfg_.num_layers - 1; ++l) {
    std::string base = "dec" + std::to_string(l) + ".bn.";
    out.emplace_back(base + "running_mean", &decoder_[l].running.mean);
    out.emplace_back(base + "running_var", &decoder_[l].running.var);
  }
  return out;
}

}  // namespace kpseg
