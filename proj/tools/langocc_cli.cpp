// Copyright 2026 The langocc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/resource.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "langocc/checkpoint.hpp"
#include "langocc/dataset_io.hpp"
#include "langocc/evaluation.hpp"
#include "langocc/image_io.hpp"
#include "langocc/mesh.hpp"
#include "langocc/scene_query.hpp"
#include "langocc/synthetic.hpp"
#include "langocc/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace langocc;

namespace {

double peak_rss_mb() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<double>(usage.ru_maxrss) / 1024.0;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("file not found: " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void set_threads(int threads) {
  if (threads > 0) {
    omp_set_num_threads(threads);
  }
}

// ---------------------------------------------------------------------------
// Training configuration <-> JSON

template <typename T>
void take(const json& j, const char* key, T& value) {
  if (j.contains(key)) {
    value = j.at(key).get<T>();
  }
}

void apply_config(const json& j, TrainConfig& cfg, LossWeights& loss) {
  take(j, "iterations", cfg.iterations);
  take(j, "rays_per_batch", cfg.rays_per_batch);
  take(j, "samples_per_ray", cfg.samples_per_ray);
  take(j, "lr_decoders", cfg.lr_decoders);
  take(j, "lr_grids", cfg.lr_grids);
  take(j, "seed", cfg.seed);
  take(j, "scp_enabled", cfg.scp_enabled);
  take(j, "log_every", cfg.log_every);
  take(j, "checkpoint_every", cfg.checkpoint_every);
  if (j.contains("bounds")) {
    const auto b = j.at("bounds").get<std::vector<double>>();
    if (b.size() != 6) {
      throw DomainError("config: bounds needs 6 numbers");
    }
    cfg.bounds = SceneBounds(Vec3(b[0], b[1], b[2]), Vec3(b[3], b[4], b[5]));
  }
  if (j.contains("field")) {
    const json& f = j.at("field");
    take(f, "levels", cfg.field.levels);
    take(f, "coarse_divisions", cfg.field.coarse_divisions);
    take(f, "geometry_feat_dim", cfg.field.geometry_feat_dim);
    take(f, "color_feat_dim", cfg.field.color_feat_dim);
    take(f, "semantic_feat_dim", cfg.field.semantic_feat_dim);
    take(f, "hidden_width", cfg.field.hidden_width);
    take(f, "hidden_layers", cfg.field.hidden_layers);
    take(f, "semantic_dim", cfg.field.semantic_dim);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    take(l, "rgb", loss.rgb);
    take(l, "depth", loss.depth);
    take(l, "occ", loss.occ);
    take(l, "fs", loss.fs);
    take(l, "sg", loss.sg);
    take(l, "truncation", loss.truncation);
    take(l, "huber_delta", loss.huber_delta);
    take(l, "robust_kernel", loss.robust_kernel);
  }
}

json config_json(const TrainConfig& cfg, const LossWeights& loss) {
  json j;
  j["iterations"] = cfg.iterations;
  j["rays_per_batch"] = cfg.rays_per_batch;
  j["samples_per_ray"] = cfg.samples_per_ray;
  j["lr_decoders"] = cfg.lr_decoders;
  j["lr_grids"] = cfg.lr_grids;
  j["seed"] = cfg.seed;
  j["scp_enabled"] = cfg.scp_enabled;
  j["log_every"] = cfg.log_every;
  j["checkpoint_every"] = cfg.checkpoint_every;
  if (cfg.bounds) {
    const SceneBounds& b = *cfg.bounds;
    j["bounds"] = {b.min_corner[0], b.min_corner[1], b.min_corner[2],
                   b.max_corner[0], b.max_corner[1], b.max_corner[2]};
  }
  j["field"] = {{"levels", cfg.field.levels},
                {"coarse_divisions", cfg.field.coarse_divisions},
                {"geometry_feat_dim", cfg.field.geometry_feat_dim},
                {"color_feat_dim", cfg.field.color_feat_dim},
                {"semantic_feat_dim", cfg.field.semantic_feat_dim},
                {"hidden_width", cfg.field.hidden_width},
                {"hidden_layers", cfg.field.hidden_layers},
                {"semantic_dim", cfg.field.semantic_dim}};
  j["loss"] = {{"rgb", loss.rgb},
               {"depth", loss.depth},
               {"occ", loss.occ},
               {"fs", loss.fs},
               {"sg", loss.sg},
               {"truncation", loss.truncation},
               {"huber_delta", loss.huber_delta},
               {"robust_kernel", loss.robust_kernel}};
  return j;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  int iterations = 0;
  int rays = 0;
  int samples = 0;
  std::uint64_t seed = 0;
  double lr_decoders = 0.0;
  double lr_grids = 0.0;
  int hidden_width = 0;
  int log_every = 0;
  int checkpoint_every = 0;
  std::vector<double> bounds;
  int threads = 0;
  bool no_huber = false;
  bool no_scp = false;
  bool no_bce = false;
};

void setup_train(CLI::App& app, TrainArgs& a) {
  app.add_option("--data", a.data, "Dataset directory")->required();
  app.add_option("--out", a.out, "Output directory for model, log and manifest")->required();
  app.add_option("--config", a.config, "JSON config file (overridden by flags)");
  app.add_option("--iterations", a.iterations, "Training iterations [10000]");
  app.add_option("--rays", a.rays, "Rays per batch [6144]");
  app.add_option("--samples", a.samples, "Samples per ray [132]");
  app.add_option("--seed", a.seed, "Random seed [0]");
  app.add_option("--lr-decoders", a.lr_decoders, "Decoder learning rate [1e-2]");
  app.add_option("--lr-grids", a.lr_grids, "Feature grid learning rate [1e-3]");
  app.add_option("--hidden-width", a.hidden_width, "Decoder hidden width [64]");
  app.add_option("--log-every", a.log_every, "Steps between log lines [100]");
  app.add_option("--checkpoint-every", a.checkpoint_every,
                 "Steps between checkpoints, 0 disables [1000]");
  app.add_option("--bounds", a.bounds, "Scene box x0 y0 z0 x1 y1 z1 (default: from depth)")
      ->expected(6);
  app.add_option("--threads", a.threads, "Worker thread cap (default: all cores)");
  app.add_flag("--no-huber", a.no_huber, "Replace the Huber kernel with the identity");
  app.add_flag("--no-scp", a.no_scp, "Disable confidence weighting (all weights 1)");
  app.add_flag("--no-bce", a.no_bce, "Disable the occupancy and free-space BCE terms");
}

int run_train(const CLI::App& app, const TrainArgs& a) {
  Stopwatch clock;
  set_threads(a.threads);
  TrainConfig cfg;
  LossWeights loss;
  if (!a.config.empty()) {
    apply_config(read_json(a.config), cfg, loss);
  }
  auto given = [&](const char* flag) { return app.count(flag) > 0; };
  if (given("--iterations")) cfg.iterations = a.iterations;
  if (given("--rays")) cfg.rays_per_batch = a.rays;
  if (given("--samples")) cfg.samples_per_ray = a.samples;
  if (given("--seed")) cfg.seed = a.seed;
  if (given("--lr-decoders")) cfg.lr_decoders = a.lr_decoders;
  if (given("--lr-grids")) cfg.lr_grids = a.lr_grids;
  if (given("--hidden-width")) cfg.field.hidden_width = a.hidden_width;
  if (given("--log-every")) cfg.log_every = a.log_every;
  if (given("--checkpoint-every")) cfg.checkpoint_every = a.checkpoint_every;
  if (given("--bounds")) {
    cfg.bounds = SceneBounds(Vec3(a.bounds[0], a.bounds[1], a.bounds[2]),
                             Vec3(a.bounds[3], a.bounds[4], a.bounds[5]));
  }
  if (a.no_huber) loss.robust_kernel = false;
  if (a.no_scp) cfg.scp_enabled = false;
  if (a.no_bce) {
    loss.occ = 0.0;
    loss.fs = 0.0;
  }
  cfg.validate();
  loss.validate();

  const FrameSet frames = load_frameset(a.data);
  if (frames.has_features()) {
    cfg.field.semantic_dim = frames.feature_dim();
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  const fs::path log_path = out / "train_log.jsonl";
  std::ofstream log(log_path);
  if (!log) {
    throw FormatError("cannot write " + log_path.string());
  }
  std::cerr << "training on " << frames.size() << " frames for " << cfg.iterations
            << " iterations\n";
  FitHooks hooks;
  hooks.log = &log;
  hooks.checkpoint_dir = out / "checkpoints";
  hooks.on_step = [&](const TrainState& state, const LossReport& report) {
    if (state.step % cfg.log_every == 0) {
      std::cerr << log_line(state.step, report) << '\n';
    }
  };
  TrainState state = fit(frames, cfg, loss, hooks);

  json artifacts = json::array();
  const fs::path model = out / "model.ooc";
  save_checkpoint(model, state.fields);
  artifacts.push_back(model.string());
  if (state.beliefs.class_count() > 0) {
    save_beliefs(out / "beliefs.obg", state.beliefs);
    artifacts.push_back((out / "beliefs.obg").string());
  }
  artifacts.push_back(log_path.string());
  if (cfg.checkpoint_every > 0) {
    for (std::int64_t s = cfg.checkpoint_every; s <= cfg.iterations; s += cfg.checkpoint_every) {
      for (const char* ext : {".ooc", ".obg", ".ots"}) {
        const fs::path p = hooks.checkpoint_dir / (checkpoint_stem(s) + ext);
        if (fs::exists(p)) {
          artifacts.push_back(p.string());
        }
      }
    }
  }

  json manifest;
  manifest["command"] = "train";
  manifest["inputs"] = {{"data", a.data}, {"config", a.config}};
  manifest["seed"] = cfg.seed;
  manifest["threads"] = a.threads > 0 ? a.threads : omp_get_max_threads();
  manifest["config"] = config_json(cfg, loss);
  manifest["toggles"] = {{"huber", loss.robust_kernel},
                         {"scp", cfg.scp_enabled},
                         {"bce", loss.occ != 0.0 || loss.fs != 0.0}};
  manifest["final_loss"] = json::parse(log_line(state.step, state.running));
  manifest["artifacts"] = artifacts;
  manifest["wall_clock_s"] = clock.seconds();
  manifest["peak_rss_mb"] = peak_rss_mb();
  write_json(out / "manifest.json", manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// extract-mesh

struct ExtractArgs {
  std::string checkpoint;
  std::string out;
  double voxel_size = 0.01;
  double threshold = 0.5;
  bool binary = false;
  int threads = 0;
};

void setup_extract(CLI::App& app, ExtractArgs& a) {
  app.add_option("--checkpoint", a.checkpoint, "Model checkpoint (.ooc)")->required();
  app.add_option("--out", a.out, "Output PLY mesh")->required();
  app.add_option("--voxel-size", a.voxel_size, "Marching cubes lattice spacing in meters [0.01]");
  app.add_option("--threshold", a.threshold, "Occupancy iso-level in (0, 1) [0.5]");
  app.add_flag("--binary", a.binary, "Write binary little-endian PLY instead of ASCII");
  app.add_option("--threads", a.threads, "Worker thread cap (default: all cores)");
}

int run_extract(const ExtractArgs& a) {
  set_threads(a.threads);
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) {
    throw DomainError("threshold must lie in (0, 1), got " + std::to_string(a.threshold));
  }
  const FieldSet fields = load_checkpoint(a.checkpoint);
  const Mesh mesh = extract_mesh(fields, a.voxel_size, a.threshold);
  if (mesh.faces.empty()) {
    std::cerr << "warning: no surface crossings; writing an empty mesh\n";
  }
  write_ply(a.out, mesh, a.binary ? PlyFormat::kBinaryLittleEndian : PlyFormat::kAscii);
  std::cerr << "wrote " << mesh.vertices.size() << " vertices, " << mesh.faces.size()
            << " faces to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// query

struct QueryArgs {
  std::string checkpoint;
  std::string prompts;
  std::string embedding;
  std::string out;
  double voxel_size = 0.02;
  double threshold = 0.5;
  bool surface_only = false;
  bool binary = false;
  int threads = 0;
};

void setup_query(CLI::App& app, QueryArgs& a) {
  app.add_option("--checkpoint", a.checkpoint, "Model checkpoint (.ooc)")->required();
  auto* p = app.add_option("--prompts", a.prompts, "Class prompts JSON: labeled point cloud");
  auto* e = app.add_option("--embedding", a.embedding,
                           "Single embedding JSON (array of D numbers): similarity cloud");
  p->excludes(e);
  app.add_option("--out", a.out, "Output PLY point cloud")->required();
  app.add_option("--voxel-size", a.voxel_size, "Map lattice spacing in meters [0.02]");
  app.add_option("--threshold", a.threshold, "Occupancy threshold for map cells [0.5]");
  app.add_flag("--surface-only", a.surface_only,
               "Keep only occupied cells with an unoccupied neighbour");
  app.add_flag("--binary", a.binary, "Write binary little-endian PLY instead of ASCII");
  app.add_option("--threads", a.threads, "Worker thread cap (default: all cores)");
}

int run_query(const QueryArgs& a) {
  set_threads(a.threads);
  if (a.prompts.empty() == a.embedding.empty()) {
    throw DomainError("query needs exactly one of --prompts or --embedding");
  }
  const FieldSet fields = load_checkpoint(a.checkpoint);
  std::optional<ClassPrompts> prompts;
  std::vector<float> embedding;
  int dim = 0;
  if (!a.prompts.empty()) {
    prompts = load_prompts(a.prompts);
    dim = prompts->dim;
  } else {
    const json j = read_json(a.embedding);
    const json& arr = j.is_object() && j.contains("embedding") ? j.at("embedding") : j;
    embedding = arr.get<std::vector<float>>();
    dim = static_cast<int>(embedding.size());
  }
  if (dim != fields.semantic_dim) {
    std::cerr << "error: query dimension " << dim << " differs from model dimension "
              << fields.semantic_dim << '\n';
    return 2;
  }
  const OccFeatureMap map = build_occ_feature_map(fields, a.voxel_size, a.threshold);
  const std::vector<std::uint8_t> keep =
      a.surface_only ? surface_cells(map) : std::vector<std::uint8_t>(map.occupied.size(), 1);
  Mesh cloud;
  for (std::size_t k = 0; k < map.occupied.size(); ++k) {
    if (keep[k]) {
      cloud.vertices.push_back(map.position(k));
    }
  }
  if (prompts) {
    cloud.vertex_class = select<int>(segment_3d(map, *prompts), keep);
  } else {
    for (double s : select<double>(query_similarity(map, embedding), keep)) {
      cloud.vertex_scalar.push_back(static_cast<float>(s));
    }
  }
  write_ply(a.out, cloud, a.binary ? PlyFormat::kBinaryLittleEndian : PlyFormat::kAscii);
  std::cerr << "wrote " << cloud.vertices.size() << " cells to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// segment-view

struct SegmentArgs {
  std::string checkpoint;
  std::string prompts;
  std::string pose;
  std::string intrinsics;
  int width = 0;
  int height = 0;
  int samples = 132;
  std::string out;
  int threads = 0;
};

void setup_segment(CLI::App& app, SegmentArgs& a) {
  app.add_option("--checkpoint", a.checkpoint, "Model checkpoint (.ooc)")->required();
  app.add_option("--prompts", a.prompts, "Class prompts JSON")->required();
  app.add_option("--pose", a.pose, "Camera-to-world pose file (16 numbers)")->required();
  app.add_option("--intrinsics", a.intrinsics, "Intrinsics file \"fx fy cx cy\"")->required();
  app.add_option("--width", a.width, "Image width in pixels")->required();
  app.add_option("--height", a.height, "Image height in pixels")->required();
  app.add_option("--samples", a.samples, "Samples per ray [132]");
  app.add_option("--out", a.out, "Output 16-bit label PNG (65535 = void)")->required();
  app.add_option("--threads", a.threads, "Worker thread cap (default: all cores)");
}

int run_segment(const SegmentArgs& a) {
  set_threads(a.threads);
  const FieldSet fields = load_checkpoint(a.checkpoint);
  const ClassPrompts prompts = load_prompts(a.prompts);
  if (prompts.dim != fields.semantic_dim) {
    std::cerr << "error: prompt dimension " << prompts.dim << " differs from model dimension "
              << fields.semantic_dim << '\n';
    return 2;
  }
  Intrinsics k;
  {
    std::ifstream in(a.intrinsics);
    if (!in || !(in >> k.fx >> k.fy >> k.cx >> k.cy)) {
      throw FormatError("cannot read intrinsics from " + a.intrinsics);
    }
  }
  const Mat4 pose = read_pose(a.pose);
  const LabelImage img =
      render_segmentation(fields, pose, k, a.width, a.height, prompts, a.samples);
  write_png_gray16(a.out, Gray16Image{img.width, img.height, img.labels});
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string pred_mesh;
  std::string gt_mesh;
  std::string pred_labels;
  std::string gt_labels;
  int classes = 0;
  double threshold = 0.05;
  double density = 10000.0;
  std::uint64_t seed = 0;
  std::string cull_data;
  double cull_tolerance = 0.1;
  int threads = 0;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
  auto* pm = app.add_option("--pred-mesh", a.pred_mesh, "Predicted mesh or point cloud (PLY)");
  auto* gm = app.add_option("--gt-mesh", a.gt_mesh, "Ground-truth mesh or point cloud (PLY)");
  auto* pl = app.add_option("--pred-labels", a.pred_labels,
                            "Predicted labels: 16-bit PNG or PLY with a class property");
  auto* gl = app.add_option("--gt-labels", a.gt_labels,
                            "Ground-truth labels in the same form as --pred-labels");
  pm->needs(gm);
  gm->needs(pm);
  pl->needs(gl);
  gl->needs(pl);
  app.add_option("--classes", a.classes, "Class count K for label evaluation");
  app.add_option("--threshold", a.threshold, "Precision/recall distance threshold [0.05]");
  app.add_option("--density", a.density, "Mesh sampling density, points per m^2 [10000]");
  app.add_option("--seed", a.seed, "Mesh sampling seed [0]");
  app.add_option("--cull-data", a.cull_data,
                 "Dataset whose views define the observed region; unobserved points are dropped");
  app.add_option("--cull-tolerance", a.cull_tolerance,
                 "Allowed distance behind the observed depth, meters [0.1]");
  app.add_option("--threads", a.threads, "Worker thread cap (default: all cores)");
}

std::vector<Vec3> mesh_points(const Mesh& mesh, double density, std::uint64_t seed) {
  return mesh.faces.empty() ? mesh.vertices : sample_mesh_points(mesh, density, seed);
}

std::vector<int> read_labels(const fs::path& path) {
  if (path.extension() == ".ply") {
    const Mesh m = read_ply(path);
    if (m.vertex_class.size() != m.vertices.size()) {
      throw FormatError(path.string() + ": no per-vertex class property");
    }
    return m.vertex_class;
  }
  const Gray16Image img = read_png_gray16(path);
  std::vector<int> labels(img.data.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = img.data[i] == kVoidLabel ? kVoidClass : img.data[i];
  }
  return labels;
}

int run_eval(const EvalArgs& a) {
  set_threads(a.threads);
  json out;
  if (!a.pred_mesh.empty()) {
    std::vector<Vec3> pred = mesh_points(read_ply(a.pred_mesh), a.density, a.seed);
    std::vector<Vec3> gt = mesh_points(read_ply(a.gt_mesh), a.density, a.seed + 1);
    if (!a.cull_data.empty()) {
      const FrameSet frames = load_frameset(a.cull_data);
      pred = select<Vec3>(pred, observed_mask(pred, frames, a.cull_tolerance));
      gt = select<Vec3>(gt, observed_mask(gt, frames, a.cull_tolerance));
    }
    if (pred.empty() || gt.empty()) {
      throw DomainError("eval: empty point set after sampling/culling");
    }
    const ReconMetrics m = recon_metrics(pred, gt, a.threshold);
    out["reconstruction"] = {{"acc", m.acc},           {"comp", m.comp},
                             {"chamfer_l1", m.chamfer_l1}, {"prec", m.prec},
                             {"recall", m.recall},     {"fscore", m.fscore},
                             {"threshold", m.threshold}, {"pred_points", pred.size()},
                             {"gt_points", gt.size()}};
  }
  if (!a.pred_labels.empty()) {
    std::vector<int> pred = read_labels(a.pred_labels);
    std::vector<int> gt = read_labels(a.gt_labels);
    if (fs::path(a.pred_labels).extension() == ".ply") {
      // Labeled clouds need not share points: every ground-truth point takes
      // the class of its nearest predicted point.
      const Mesh pm = read_ply(a.pred_labels);
      std::vector<Vec3> gt_points = read_ply(a.gt_labels).vertices;
      if (!a.cull_data.empty()) {
        const std::vector<std::uint8_t> seen =
            observed_mask(gt_points, load_frameset(a.cull_data), a.cull_tolerance);
        gt_points = select<Vec3>(gt_points, seen);
        gt = select<int>(gt, seen);
      }
      pred = transfer_labels(gt_points, pm.vertices, pred);
    } else if (pred.size() != gt.size()) {
      throw DomainError("label images differ in size");
    }
    int k = a.classes;
    if (k <= 0) {
      for (int v : gt) k = std::max(k, v + 1);
      for (int v : pred) k = std::max(k, v + 1);
    }
    const SegMetrics m = seg_metrics(pred, gt, k);
    auto nan_to_null = [](const std::vector<double>& v) {
      json arr = json::array();
      for (double x : v) {
        arr.push_back(std::isnan(x) ? json(nullptr) : json(x));
      }
      return arr;
    };
    out["segmentation"] = {{"miou", m.miou},
                           {"macc", m.macc},
                           {"iou", nan_to_null(m.iou)},
                           {"acc", nan_to_null(m.acc)},
                           {"classes", k},
                           {"confusion", m.confusion}};
  }
  if (out.empty()) {
    throw DomainError("eval needs --pred-mesh/--gt-mesh or --pred-labels/--gt-labels");
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// synth-gen

struct SynthArgs {
  std::string out;
  int frames = 40;
  int width = 128;
  int height = 128;
  int dim = 16;
  double flip = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  double gt_density = 2500.0;
};

void setup_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--out", a.out, "Output dataset directory")->required();
  app.add_option("--frames", a.frames, "Number of camera frames [40]");
  app.add_option("--width", a.width, "Image width [128]");
  app.add_option("--height", a.height, "Image height [128]");
  app.add_option("--dim", a.dim, "Feature dimension D [16]");
  app.add_option("--flip", a.flip, "Fraction of pixels given a wrong class feature [0]");
  app.add_option("--noise", a.noise, "Feature noise standard deviation [0]");
  app.add_option("--seed", a.seed, "Scene and corruption seed [0]");
  app.add_option("--gt-density", a.gt_density,
                 "Ground-truth surface samples per m^2 written to gt_surface.ply [2500]");
}

int run_synth(const SynthArgs& a) {
  const SyntheticScene scene = two_box_room(a.frames, a.width, a.height, a.dim, a.seed);
  CorruptionConfig corruption;
  corruption.flip_fraction = a.flip;
  corruption.noise_sigma = a.noise;
  corruption.seed = a.seed + 1;
  const SyntheticFrames synth = generate_synthetic(scene, corruption);
  const fs::path out(a.out);
  write_frameset(out, synth.frames);
  const SurfaceSamples surface = sample_surface(scene, a.gt_density, a.seed + 2);
  Mesh cloud;
  cloud.vertices = surface.points;
  cloud.vertex_class = surface.classes;
  write_ply(out / "gt_surface.ply", cloud, PlyFormat::kBinaryLittleEndian);
  const SceneBounds& b = scene.bounds;
  json info;
  info["bounds"] = {b.min_corner[0], b.min_corner[1], b.min_corner[2],
                    b.max_corner[0], b.max_corner[1], b.max_corner[2]};
  info["classes"] = scene.class_names;
  info["frames"] = a.frames;
  info["flip"] = a.flip;
  info["noise"] = a.noise;
  info["seed"] = a.seed;
  write_json(out / "scene.json", info);
  std::cerr << "wrote " << a.frames << " frames to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occupancy and open-vocabulary semantic fields from posed RGB-D frames"};
  app.require_subcommand(1);

  TrainArgs train_args;
  ExtractArgs extract_args;
  QueryArgs query_args;
  SegmentArgs segment_args;
  EvalArgs eval_args;
  SynthArgs synth_args;
  CLI::App* train = app.add_subcommand("train", "Fit fields to a dataset");
  CLI::App* extract = app.add_subcommand("extract-mesh", "Marching cubes on the occupancy field");
  CLI::App* query = app.add_subcommand("query", "3D segmentation or similarity point cloud");
  CLI::App* segment = app.add_subcommand("segment-view", "Render a 2D label image for a view");
  CLI::App* eval = app.add_subcommand("eval", "Reconstruction or segmentation metrics as JSON");
  CLI::App* synth = app.add_subcommand("synth-gen", "Write the synthetic two-box room dataset");
  setup_train(*train, train_args);
  setup_extract(*extract, extract_args);
  setup_query(*query, query_args);
  setup_segment(*segment, segment_args);
  setup_eval(*eval, eval_args);
  setup_synth(*synth, synth_args);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(*train, train_args);
    if (*extract) return run_extract(extract_args);
    if (*query) return run_query(query_args);
    if (*segment) return run_segment(segment_args);
    if (*eval) return run_eval(eval_args);
    if (*synth) return run_synth(synth_args);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
