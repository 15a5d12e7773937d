#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kpseg/checkpoint.hpp"
#include "kpseg/cloud_io.hpp"
#include "kpseg/gradcheck_suite.hpp"
#include "kpseg/grid.hpp"
#include "kpseg/rosette.hpp"
#include "kpseg/run_config.hpp"
#include "kpseg/scene.hpp"
#include "kpseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace kpseg;

namespace {

std::vector<std::string> cloud_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext == ".kpc" || ext == ".ply" || ext == ".xyz") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ArgumentError("no cloud files (.kpc/.ply/.xyz) in " + dir);
  return files;
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed ^ (salt * 0x9E3779B97F4A7C15ull);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

int cmd_gen_data(const std::string& out_dir, int scenes, uint64_t seed, double extent,
                 double density, const std::string& spec_path, const std::string& mode,
                 double scan_duration, const std::string& format) {
  fs::create_directories(out_dir);
  CloudFormat fmt = format == "ply"   ? CloudFormat::ply_ascii
                    : format == "xyz" ? CloudFormat::xyz_text
                                      : CloudFormat::kpc_binary;
  for (int i = 0; i < scenes; ++i) {
    SceneSpec spec;
    if (!spec_path.empty()) {
      std::ifstream fs_in(spec_path);
      if (!fs_in) throw IoError("cannot open spec " + spec_path);
      std::stringstream buf;
      buf << fs_in.rdbuf();
      spec = scene_spec_from_json(buf.str());
    } else {
      spec = make_interchange_spec(extent, density, mix_seed(seed, i * 2 + 1));
    }
    Scene scene = generate_scene(spec, mix_seed(seed, i * 2));
    LabeledCloud cloud = scene.cloud;
    if (mode == "scan") {
      // UAV-style pass: three poses 17 m above the scene looking down
      TriangleBvh bvh(scene.primitives);
      cloud = LabeledCloud{};
      for (int p = -1; p <= 1; ++p) {
        SensorPose pose;
        pose.position = {p * extent * 0.25, 0.0, 17.0};
        pose.boresight = {0.05, 0.0, -1.0};
        LabeledCloud part = rosette_scan(scene, bvh, pose, RosetteConfig{}, scan_duration,
                                         mix_seed(seed, 100 + i * 3 + p));
        cloud.coords.insert(cloud.coords.end(), part.coords.begin(), part.coords.end());
        cloud.intensity.insert(cloud.intensity.end(), part.intensity.begin(),
                               part.intensity.end());
        cloud.labels.insert(cloud.labels.end(), part.labels.begin(), part.labels.end());
      }
    }
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%03d.%s", i, format.c_str());
    std::string path = (fs::path(out_dir) / name).string();
    save_cloud(cloud, path, fmt);
    std::ofstream spec_out(fs::path(out_dir) / (std::string(name) + ".spec.json"));
    spec_out << scene_spec_to_json(spec) << '\n';
    std::cout << path << " points=" << cloud.size() << '\n';
  }
  return 0;
}

int cmd_train(RunConfig cfg, int steps_override) {
  if (cfg.data_dir.empty()) throw ArgumentError("train: --data is required");
  if (cfg.out_dir.empty()) throw ArgumentError("train: --out is required");
  fs::create_directories(cfg.out_dir);

  std::cout << run_config_to_json(cfg) << '\n';
  Dataset data = load_dataset(cloud_files(cfg.data_dir), cfg.net);
  std::cerr << "dataset: " << data.clouds.size() << " clouds, " << data.total_points()
            << " points after input resampling\n";

  Network net(cfg.net, cfg.seed);
  Trainer trainer(net, cfg);
  int total_steps = steps_override > 0 ? steps_override
                                       : cfg.optim.epochs * cfg.optim.steps_per_epoch;

  std::ofstream log((fs::path(cfg.out_dir) / "train_log.jsonl").string());
  auto reports = trainer.train(data, total_steps, &log);

  std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.kpck").string();
  save_checkpoint(net, ckpt);
  std::ofstream cfg_out((fs::path(cfg.out_dir) / "config.json").string());
  cfg_out << run_config_to_json(cfg) << '\n';
  if (!reports.empty())
    std::cerr << "final: loss=" << reports.back().loss << " batch_oa=" << reports.back().batch_oa
              << '\n';
  std::cout << ckpt << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_dir,
             double stride) {
  auto net = load_checkpoint(ckpt);
  std::vector<LabeledCloud> clouds;
  for (const std::string& f : cloud_files(data_dir)) {
    LabeledCloud c = load_cloud(f);
    if (!c.has_labels()) {
      std::cerr << "skipping unlabeled " << f << '\n';
      continue;
    }
    clouds.push_back(grid_subsample(c, net->config().cell_sizes[0], LabelMode::majority));
  }
  if (clouds.empty()) throw ArgumentError("eval: no labeled clouds in " + data_dir);

  ConfusionMatrix cm = evaluate_clouds(*net, clouds, stride);
  MetricsReport report = compute_metrics(cm);
  std::string table = metrics_to_table(report, "kpseg");
  std::cout << table;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream mjson((fs::path(out_dir) / "metrics.json").string());
    mjson << metrics_to_json(report) << '\n';
    std::ofstream mtable((fs::path(out_dir) / "metrics.txt").string());
    mtable << table;
  }
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
                double stride) {
  auto net = load_checkpoint(ckpt);
  LabeledCloud cloud = load_cloud(in_path);
  PredictResult pred = predict_cloud(*net, cloud, stride);
  cloud.labels = pred.labels;
  save_cloud(cloud, out_path);
  std::cout << out_path << " points=" << cloud.size() << '\n';
  return 0;
}

int cmd_pattern(double duration, bool coverage, int grid_res, const RosetteConfig& cfg,
                const std::string& out_path) {
  if (coverage) {
    nlohmann::json j;
    j["fov_deg"] = cfg.fov_deg;
    j["rate"] = cfg.rate;
    j["f_petal"] = cfg.f_petal;
    j["f_spin"] = cfg.f_spin;
    j["grid_res"] = grid_res;
    nlohmann::json series = nlohmann::json::array();
    for (double t : {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0}) {
      if (t > duration + 1e-12) break;
      series.push_back({{"t", t}, {"coverage", fov_coverage(cfg, t, grid_res)}});
    }
    if (duration > 2.0)
      series.push_back({{"t", duration}, {"coverage", fov_coverage(cfg, duration, grid_res)}});
    j["coverage"] = series;
    std::string text = j.dump(2);
    std::cout << text << '\n';
    if (!out_path.empty()) {
      std::ofstream fs_out(out_path);
      fs_out << text << '\n';
    }
    return 0;
  }
  // dump the sampled directions as xyz for inspection
  auto dirs = rosette_directions(cfg, 0.0, duration);
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    os = &file;
  }
  for (const TimedDirection& d : dirs)
    *os << d.dir.x << ' ' << d.dir.y << ' ' << d.dir.z << '\n';
  return 0;
}

int cmd_grad_check(uint64_t seed) {
  auto checks = run_gradient_checks(seed);
  bool all_ok = true;
  for (const LayerCheck& c : checks) {
    bool ok = c.passed();
    all_ok &= ok;
    std::printf("%-22s max_rel_err=%.3e  tol=%.0e  %s\n", c.layer.c_str(), c.max_rel_error,
                c.tolerance, ok ? "ok" : "FAIL");
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kpseg: kernel-point-convolution point cloud segmentation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate synthetic labeled interchange scenes");
  int scenes = 1;
  uint64_t seed = 0;
  std::string out_dir, spec_path, mode = "surface", format = "kpc";
  double extent = 40.0, density = 750.0, scan_duration = 1.0;
  gen->add_option("--scenes", scenes, "number of scenes");
  gen->add_option("--seed", seed, "random seed");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--extent", extent, "scene extent in meters");
  gen->add_option("--density", density, "surface sampling density, points/m^2");
  gen->add_option("--spec", spec_path, "scene spec JSON (overrides the random layout)");
  gen->add_option("--mode", mode, "surface | scan")->check(CLI::IsMember({"surface", "scan"}));
  gen->add_option("--scan-duration", scan_duration, "seconds per scan pose (scan mode)");
  gen->add_option("--format", format, "kpc | ply | xyz")
      ->check(CLI::IsMember({"kpc", "ply", "xyz"}));

  // grid-sample
  auto* gsub = app.add_subcommand("grid-sample", "grid subsampling of a cloud");
  std::string gs_in, gs_out;
  double gs_cell = 0.1;
  bool gs_no_labels = false;
  gsub->add_option("--in", gs_in, "input cloud")->required();
  gsub->add_option("--out", gs_out, "output cloud")->required();
  gsub->add_option("--cell", gs_cell, "cell size in meters");
  gsub->add_flag("--no-labels", gs_no_labels, "drop labels instead of majority-voting them");

  // pattern
  auto* pat = app.add_subcommand("pattern", "rosette scan pattern and FOV coverage");
  double duration = 1.0;
  bool coverage = false;
  int grid_res = 64;
  std::string pat_out;
  RosetteConfig rcfg;
  pat->add_option("--duration", duration, "integration time in seconds");
  pat->add_flag("--coverage", coverage, "emit the FOV coverage report");
  pat->add_option("--grid-res", grid_res, "coverage raster resolution");
  pat->add_option("--f-petal", rcfg.f_petal, "petal frequency, Hz");
  pat->add_option("--f-spin", rcfg.f_spin, "spin frequency, Hz");
  pat->add_option("--rate", rcfg.rate, "points per second");
  pat->add_option("--fov", rcfg.fov_deg, "full FOV angle, degrees");
  pat->add_option("--out", pat_out, "write the report/directions to this file");

  // train
  auto* train = app.add_subcommand("train", "train a segmentation network");
  std::string t_config, t_preset = "paper", t_data, t_out;
  uint64_t t_seed = 0;
  int t_steps = 0, t_workers = 0;
  bool t_seed_set = false, t_intensity = false;
  train->add_option("--config", t_config, "JSON config file");
  train->add_option("--preset", t_preset, "paper | tiny")
      ->check(CLI::IsMember({"paper", "tiny"}));
  train->add_option("--data", t_data, "directory of training clouds");
  train->add_option("--out", t_out, "output directory");
  train->add_option("--steps", t_steps, "total steps (overrides epochs * steps_per_epoch)");
  train->add_option("--workers", t_workers, "pipeline workers (1 = bitwise reproducible)");
  train->add_flag("--use-intensity", t_intensity, "feed intensity as an input feature");
  auto* t_seed_opt = train->add_option("--seed", t_seed, "random seed");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on labeled clouds");
  std::string e_ckpt, e_data, e_out;
  double e_stride = 2.5;
  eval->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
  eval->add_option("--data", e_data, "directory of labeled clouds")->required();
  eval->add_option("--out", e_out, "output directory for metrics");
  eval->add_option("--stride", e_stride, "inference tile stride, meters");

  // predict
  auto* pred = app.add_subcommand("predict", "label a cloud with a trained checkpoint");
  std::string p_ckpt, p_in, p_out;
  double p_stride = 2.5;
  pred->add_option("--checkpoint", p_ckpt, "checkpoint file")->required();
  pred->add_option("--in", p_in, "input cloud")->required();
  pred->add_option("--out", p_out, "output labeled cloud")->required();
  pred->add_option("--stride", p_stride, "inference tile stride, meters");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference checks for every layer");
  uint64_t gc_seed = 7;
  gc->add_option("--seed", gc_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(out_dir, scenes, seed, extent, density, spec_path, mode,
                                  scan_duration, format);
    if (*gsub) {
      LabeledCloud c = load_cloud(gs_in);
      save_cloud(grid_subsample(c, gs_cell, gs_no_labels ? LabelMode::none : LabelMode::majority),
                 gs_out);
      std::cout << gs_out << '\n';
      return 0;
    }
    if (*pat) return cmd_pattern(duration, coverage, grid_res, rcfg, pat_out);
    if (*train) {
      RunConfig cfg = t_config.empty() ? preset_config(t_preset) : load_config(t_config);
      if (t_config.empty() || !t_data.empty()) cfg.data_dir = t_data;
      if (!t_out.empty()) cfg.out_dir = t_out;
      if (t_seed_opt->count() > 0) cfg.seed = t_seed;
      if (t_workers > 0) cfg.workers = t_workers;
      if (t_intensity) cfg.net.use_intensity = true;
      (void)t_seed_set;
      return cmd_train(cfg, t_steps);
    }
    if (*eval) return cmd_eval(e_ckpt, e_data, e_out, e_stride);
    if (*pred) return cmd_predict(p_ckpt, p_in, p_out, p_stride);
    if (*gc) return cmd_grad_check(gc_seed);
  } catch (const std::exception& e) {
    std::cerr << "kpseg: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
