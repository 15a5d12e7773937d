// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run a single criterion with `kpseg_acceptance <n>`.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "kpseg/checkpoint.hpp"
#include "kpseg/cloud_io.hpp"
#include "kpseg/gradcheck_suite.hpp"
#include "kpseg/grid.hpp"
#include "kpseg/metrics.hpp"
#include "kpseg/rosette.hpp"
#include "kpseg/scene.hpp"
#include "kpseg/trainer.hpp"

using namespace kpseg;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Criterion {
  int number;
  const char* title;
  bool (*run)(std::string& detail);
};

// ---- helpers -----------------------------------------------------------------

LabeledCloud random_cloud(size_t n, Rng& rng, double extent, bool labels = false) {
  LabeledCloud c;
  for (size_t i = 0; i < n; ++i) {
    c.coords.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                        rng.uniform(-extent, extent)});
    if (labels) c.labels.push_back(static_cast<uint8_t>(rng.uniform_index(6)));
  }
  return c;
}

// The fixed desk-scale scenes used by criteria 7, 8 and 10. Extents and
// densities are chosen so the overfit scene lands near 20k points after the
// 10 cm input resampling and the generalization scenes train in minutes.
constexpr double kOverfitExtent = 14.0;
constexpr double kOverfitDensity = 150.0;
constexpr uint64_t kOverfitSeed = 12;
constexpr double kGenExtent = 12.0;
constexpr double kGenDensity = 140.0;
constexpr int kGenTrainScenes = 8;
constexpr int kGenTestScenes = 2;
constexpr int kGenSteps = 500;

RunConfig tiny_run_config(int stack_depth, uint64_t seed) {
  RunConfig cfg = preset_config("tiny");
  cfg.net.stack_depth = stack_depth;
  cfg.seed = seed;
  cfg.optim.class_weighting = "inverse";
  return cfg;
}

LabeledCloud overfit_scene() {
  SceneSpec spec = make_interchange_spec(kOverfitExtent, kOverfitDensity, kOverfitSeed);
  return generate_scene(spec, kOverfitSeed).cloud;
}

// ---- criteria ----------------------------------------------------------------

bool c1_gradients(std::string& detail) {
  auto start = Clock::now();
  bool ok = true;
  std::ostringstream os;
  for (const LayerCheck& c : run_gradient_checks(7)) {
    ok &= c.passed();
    os << c.layer << "=" << std::scientific << c.max_rel_error << " ";
  }
  double elapsed = seconds_since(start);
  ok &= elapsed < 60.0;
  os << "(" << std::fixed << elapsed << " s)";
  detail = os.str();
  return ok;
}

bool c2_oracles(std::string& detail) {
  auto start = Clock::now();
  bool ok = true;
  for (uint64_t seed = 0; seed < 100 && ok; ++seed) {
    Rng rng(seed);
    size_t n = 50 + rng.uniform_index(951);  // up to ~1000 points
    LabeledCloud cloud = random_cloud(n, rng, 1.0, true);
    double radius = rng.uniform(0.05, 0.4);

    // radius_search vs O(M*S) filter
    Points queries = random_cloud(64, rng, 1.0).coords;
    NeighborTable t = radius_search(queries, cloud.coords, radius, 100000);
    for (size_t m = 0; m < queries.size() && ok; ++m) {
      std::set<uint32_t> brute;
      for (uint32_t s = 0; s < cloud.size(); ++s)
        if (squared_norm(cloud.coords[s] - queries[m]) <= radius * radius) brute.insert(s);
      std::set<uint32_t> got(t.row(m), t.row(m) + t.row_count(m));
      ok &= got == brute;
    }

    // grid_subsample vs hash oracle
    double cell = rng.uniform(0.08, 0.5);
    LabeledCloud sub = grid_subsample(cloud, cell);
    std::map<CellKey, std::vector<size_t>> cells;
    for (size_t i = 0; i < cloud.size(); ++i)
      cells[cell_of(cloud.coords[i], cell)].push_back(i);
    ok &= sub.size() == cells.size();
    size_t row = 0;
    for (auto& [key, members] : cells) {
      if (!ok) break;
      Vec3 bary{0, 0, 0};
      for (size_t i : members) bary += cloud.coords[i];
      bary = bary / static_cast<double>(members.size());
      ok &= norm(sub.coords[row] - bary) < 1e-12;
      ok &= cell_of(sub.coords[row], cell) == key;
      ++row;
    }
  }
  double elapsed = seconds_since(start);
  ok &= elapsed < 60.0;
  detail = "100 random clouds (" + std::to_string(elapsed) + " s)";
  return ok;
}

bool c3_influence(std::string& detail) {
  KernelDisposition kd = generate_kernel_points(15, 1.0, 42);
  const double d = kd.influence;
  bool ok = true;
  for (int k = 0; k < kd.count(); ++k) {
    Vec3 off = normalized(Vec3{0.3 + k, 1.1, -0.4});
    Mat rel(3, 3);
    rel(0, 0) = kd.points[k].x; rel(0, 1) = kd.points[k].y; rel(0, 2) = kd.points[k].z;
    Vec3 half = kd.points[k] + off * (d / 2.0);
    rel(1, 0) = half.x; rel(1, 1) = half.y; rel(1, 2) = half.z;
    Vec3 edge = kd.points[k] + off * d;
    rel(2, 0) = edge.x; rel(2, 1) = edge.y; rel(2, 2) = edge.z;
    Mat h = kernel_influence(rel, kd);
    ok &= h(0, k) == 1.0;
    ok &= std::abs(h(1, k) - 0.5) <= 1e-12;
    ok &= h(2, k) <= 1e-12;
  }
  detail = "h(0)=1, h(d/2)=0.5, h(d)=0 for all 15 kernel points";
  return ok;
}

bool c4_receptive_field(std::string& detail) {
  const double spacing = 0.15, radius = 0.2;
  Points pts(12);
  for (int i = 0; i < 12; ++i) pts[i] = {i * spacing, 0.0, 0.0};
  NeighborTable nbrs = radius_search(pts, pts, radius, 8);
  KernelDisposition kd = generate_kernel_points(15, radius, 42);
  Rng rng(3);
  bool ok = true;
  std::ostringstream os;

  for (int depth : {1, 2, 3}) {
    ParameterStore store;
    StackedBlock block(store, "blk", depth, 2, 3, 15, 0.98, 1e-6);
    for (ConvUnit& u : block.units())
      for (Eigen::Index i = 0; i < u.weights->value.size(); ++i)
        u.weights->value.data()[i] = rng.uniform(-0.5, 0.5);

    Mat x(12, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    Mat base = block.forward(pts, nbrs, kd, x, false, 0.1);

    Mat beyond = x;
    beyond(depth + 1, 0) += 5.0;
    Mat out_beyond = block.forward(pts, nbrs, kd, beyond, false, 0.1);
    double change_beyond = (out_beyond.row(0) - base.row(0)).cwiseAbs().maxCoeff();

    Mat within = x;
    within(depth, 0) += 5.0;
    Mat out_within = block.forward(pts, nbrs, kd, within, false, 0.1);
    double change_within = (out_within.row(0) - base.row(0)).cwiseAbs().maxCoeff();

    ok &= change_beyond == 0.0;
    ok &= change_within > 0.0;
    os << "n=" << depth << ": beyond=" << change_beyond << " within=" << change_within << "  ";
  }
  detail = os.str();
  return ok;
}

bool c5_translation(std::string& detail) {
  Rng rng(5);
  LabeledCloud cloud = random_cloud(400, rng, 2.0, true);
  NetworkConfig cfg;
  cfg.num_layers = 5;
  cfg.radii = {0.2, 0.4, 0.8, 1.6, 3.2};
  cfg.cell_sizes = {0.2, 0.4, 0.8, 1.6, 3.2};
  cfg.channels = {4, 8, 16, 32, 64};
  cfg.stack_depth = 3;
  cfg.max_neighbors = 20;
  Network net(cfg, 6);
  MultiscaleBatch batch = build_pyramid(cloud, cfg);
  Mat base = net.forward(batch, false);

  MultiscaleBatch moved = batch;
  moved.translate({100.0, -50.0, 7.0});
  Mat shifted = net.forward(moved, false);
  double diff = (shifted - base).cwiseAbs().maxCoeff();
  detail = "max |logit delta| = " + std::to_string(diff);
  return diff < 1e-9;
}

bool c6_metrics(std::string& detail) {
  // hand-enumerated example
  ConfusionMatrix toy;
  accumulate(toy, {0, 1, 1, 1}, {0, 0, 1, 1});
  MetricsReport r = compute_metrics(toy);
  bool ok = r.oa == 0.75 && std::abs(r.miou - 7.0 / 12.0) < 1e-15;

  Rng rng(6);
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    size_t n = 1 + rng.uniform_index(64);
    std::vector<uint8_t> pred(n), truth(n);
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<uint8_t>(rng.uniform_index(6));
      truth[i] = rng.uniform() < 0.1 ? kIgnoreLabel
                                     : static_cast<uint8_t>(rng.uniform_index(6));
      any |= truth[i] != kIgnoreLabel;
    }
    if (!any) truth[0] = 3;
    ConfusionMatrix cm;
    accumulate(cm, pred, truth);
    MetricsReport rep = compute_metrics(cm);
    for (int c = 0; c < 6 && ok; ++c) {
      int64_t inter = 0, uni = 0;
      for (size_t i = 0; i < n; ++i) {
        if (truth[i] == kIgnoreLabel) continue;
        bool in_p = pred[i] == c, in_t = truth[i] == c;
        inter += in_p && in_t;
        uni += in_p || in_t;
      }
      if (uni == 0) {
        ok &= !rep.iou[c].has_value();
      } else {
        ok &= rep.iou[c].has_value() &&
              *rep.iou[c] == static_cast<double>(inter) / static_cast<double>(uni);
      }
    }
  }
  detail = "4-point example exact, 1000 random cases vs set oracle";
  return ok;
}

bool c7_overfit(std::string& detail) {
  auto start = Clock::now();
  RunConfig cfg = tiny_run_config(3, 7);
  LabeledCloud scene = overfit_scene();
  Dataset data = make_dataset({scene}, cfg.net);
  size_t n_points = data.total_points();

  Network net(cfg.net, cfg.seed);
  Trainer trainer(net, cfg);
  std::vector<StepReport> reports = trainer.train(data, 200, nullptr);

  ConfusionMatrix cm = evaluate_clouds(net, data.clouds);
  MetricsReport r = compute_metrics(cm);
  double elapsed = seconds_since(start);

  std::ostringstream os;
  os << "points=" << n_points << " train-OA=" << r.oa << " final-loss=" << reports.back().loss
     << " (" << elapsed << " s)";
  detail = os.str();
  return n_points >= 15000 && n_points <= 25000 && r.oa >= 0.95 && elapsed < 300.0;
}

bool c8_generalization(std::string& detail) {
  auto start = Clock::now();
  std::vector<LabeledCloud> train_scenes, test_scenes;
  for (int i = 0; i < kGenTrainScenes + kGenTestScenes; ++i) {
    SceneSpec spec = make_interchange_spec(kGenExtent, kGenDensity, 400 + i);
    LabeledCloud cloud = generate_scene(spec, 500 + i).cloud;
    if (i < kGenTrainScenes) train_scenes.push_back(std::move(cloud));
    else test_scenes.push_back(std::move(cloud));
  }

  auto run_variant = [&](int stack_depth) {
    RunConfig cfg = tiny_run_config(stack_depth, 21);
    Dataset data = make_dataset(train_scenes, cfg.net);
    Network net(cfg.net, cfg.seed);
    Trainer trainer(net, cfg);
    trainer.train(data, kGenSteps, nullptr);
    std::vector<LabeledCloud> eval_clouds;
    for (const LabeledCloud& c : test_scenes)
      eval_clouds.push_back(grid_subsample(c, cfg.net.cell_sizes[0]));
    MetricsReport r = compute_metrics(evaluate_clouds(net, eval_clouds));
    return r;
  };

  MetricsReport triple = run_variant(3);
  MetricsReport single = run_variant(1);
  double elapsed = seconds_since(start);

  std::ostringstream os;
  os << "mIoU(stack=3)=" << triple.miou << " mIoU(stack=1)=" << single.miou << " ("
     << elapsed << " s)";
  detail = os.str();
  return triple.miou >= 0.60 && triple.miou >= single.miou - 0.02 && elapsed < 1200.0;
}

bool c9_rosette(std::string& detail) {
  RosetteConfig cfg;
  double c01 = fov_coverage(cfg, 0.1, 64);
  double c10 = fov_coverage(cfg, 1.0, 64);
  bool ok = c01 >= 0.15 && c01 <= 0.25 && c10 >= 0.88;
  double prev = 0.0;
  for (double t : {0.05, 0.1, 0.2, 0.4, 0.8, 1.0, 1.6}) {
    double c = fov_coverage(cfg, t, 64);
    ok &= c >= prev;
    prev = c;
  }
  std::ostringstream os;
  os << "coverage(0.1s)=" << c01 << " coverage(1.0s)=" << c10 << " monotone";
  detail = os.str();
  return ok;
}

bool c10_determinism(std::string& detail) {
  // two identical seeded trainings produce identical loss logs
  RunConfig cfg = tiny_run_config(2, 7);
  cfg.workers = 1;
  SceneSpec spec = make_interchange_spec(8.0, 120.0, 3);
  LabeledCloud scene = generate_scene(spec, 3).cloud;

  auto run_log = [&]() {
    Dataset data = make_dataset({scene}, cfg.net);
    Network net(cfg.net, cfg.seed);
    Trainer trainer(net, cfg);
    std::ostringstream log;
    trainer.train(data, 10, &log);
    return log.str();
  };
  std::string log1 = run_log(), log2 = run_log();
  bool ok = log1 == log2 && !log1.empty();

  // kpc round trip is bit-exact
  Rng rng(8);
  LabeledCloud cloud;
  for (int i = 0; i < 5000; ++i)
    cloud.coords.push_back({static_cast<float>(rng.uniform(-10, 10)),
                            static_cast<float>(rng.uniform(-10, 10)),
                            static_cast<float>(rng.uniform(-10, 10))});
  auto tmp = std::filesystem::temp_directory_path();
  std::string p1 = (tmp / "kpseg_acc.kpc").string();
  save_cloud(cloud, p1, CloudFormat::kpc_binary);
  ok &= load_cloud(p1, CloudFormat::kpc_binary) == cloud;

  // checkpoint save(load(f)) is byte-identical
  NetworkConfig net_cfg = cfg.net;
  Network net(net_cfg, 7);
  std::string c1 = (tmp / "kpseg_acc1.kpck").string();
  std::string c2 = (tmp / "kpseg_acc2.kpck").string();
  save_checkpoint(net, c1);
  auto restored = load_checkpoint(c1);
  save_checkpoint(*restored, c2);
  std::ifstream f1(c1, std::ios::binary), f2(c2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  ok &= !b1.empty() && b1 == b2;

  detail = "identical 10-step loss logs, bit-exact kpc and checkpoint round trips";
  return ok;
}

const Criterion kCriteria[] = {
    {1, "gradient correctness (finite differences, every layer + micro network)", c1_gradients},
    {2, "oracle equivalence (radius_search, grid_subsample vs brute force)", c2_oracles},
    {3, "kernel influence analytic values at 0, d/2, d", c3_influence},
    {4, "receptive-field bound of stacked convolutions (n hops)", c4_receptive_field},
    {5, "translation invariance of full-network logits", c5_translation},
    {6, "metrics vs set-based oracle + hand-enumerated example", c6_metrics},
    {7, "overfit: tiny preset, one ~20k-point scene, 200 steps, OA >= 0.95", c7_overfit},
    {8, "generalization: 8 train / 2 held-out scenes, mIoU >= 0.60, stacking trend", c8_generalization},
    {9, "rosette coverage calibration (20% @ 0.1 s band, >= 88% @ 1 s)", c9_rosette},
    {10, "seeded determinism and bit-exact round trips", c10_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  int only = argc > 1 ? std::atoi(argv[1]) : 0;
  bool all_ok = true;
  for (const Criterion& c : kCriteria) {
    if (only != 0 && c.number != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    all_ok &= ok;
    std::printf("[%s] criterion %2d: %s\n        %s\n", ok ? "PASS" : "FAIL", c.number, c.title,
                detail.c_str());
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
