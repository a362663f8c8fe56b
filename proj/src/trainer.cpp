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

#include "langocc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "binary_io.hpp"
#include "langocc/checkpoint.hpp"

namespace langocc {

namespace fs = std::filesystem;

namespace {

constexpr char kStateMagic[5] = "OTS1";
constexpr double kRunningDecay = 0.9;

AdamConfig adam_config(const TrainConfig& config) {
  AdamConfig a;
  a.lr_decoders = config.lr_decoders;
  a.lr_grids = config.lr_grids;
  return a;
}

void update_running(LossReport& running, const LossReport& r, bool first) {
  const double a = first ? 0.0 : kRunningDecay;
  running.rgb = a * running.rgb + (1.0 - a) * r.rgb;
  running.depth = a * running.depth + (1.0 - a) * r.depth;
  running.occ = a * running.occ + (1.0 - a) * r.occ;
  running.fs = a * running.fs + (1.0 - a) * r.fs;
  running.sg = a * running.sg + (1.0 - a) * r.sg;
  running.total = a * running.total + (1.0 - a) * r.total;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0 || rays_per_batch <= 0 || samples_per_ray < 2 || log_every <= 0 ||
      checkpoint_every < 0) {
    throw DomainError("TrainConfig: counts must be positive");
  }
  if (!(lr_decoders > 0.0) || !(lr_grids > 0.0)) {
    throw DomainError("TrainConfig: learning rates must be positive");
  }
}

SceneBounds frames_bounds(const FrameSet& frames, double margin) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Frame& f : frames.frames) {
    const Vec3 c = f.pose.block<3, 1>(0, 3);
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
    for (int v = 0; v < f.height; ++v) {
      for (int u = 0; u < f.width; ++u) {
        const double z = f.depth_at(u, v);
        if (z <= 0.0) {
          continue;
        }
        const CameraRay ray = camera_ray(frames.intrinsics, f.pose, u, v);
        const Vec3 p = ray.origin + z * ray.z_to_range * ray.direction;
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    }
  }
  if (!lo.allFinite() || !hi.allFinite()) {
    throw DomainError("frames_bounds: no frames");
  }
  const Vec3 pad = Vec3::Constant(margin);
  return SceneBounds(lo - pad, hi + pad);
}

TrainState init_state(const FrameSet& frames, const TrainConfig& config) {
  config.validate();
  const SceneBounds bounds = config.bounds ? *config.bounds : frames_bounds(frames);
  FieldConfig fc = config.field;
  if (frames.has_features()) {
    fc.semantic_dim = frames.feature_dim();
  }
  TrainState state;
  state.fields = FieldSet::create(bounds, fc, config.seed);
  if (frames.prompts && frames.prompts->class_count() > 0) {
    state.beliefs = BeliefGrid::for_fields(state.fields, frames.prompts->class_count());
  }
  state.optimizer = Adam(state.fields, adam_config(config));
  state.rng = Rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  state.gradient = FieldGradient(state.fields);
  return state;
}

RayBundle sample_batch(const FrameSet& frames, const TrainConfig& config, Rng& rng) {
  if (frames.size() == 0) {
    throw DomainError("sample_batch: empty frame set");
  }
  RayBundle rays;
  const int dim = frames.has_features() ? frames.feature_dim() : 0;
  rays.resize(static_cast<std::size_t>(config.rays_per_batch), dim);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto fi = static_cast<std::size_t>(rng.below(frames.size()));
    const Frame& f = frames.frames[fi];
    const int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(f.width)));
    const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(f.height)));
    const CameraRay ray = camera_ray(frames.intrinsics, f.pose, u, v);
    rays.origins[r] = ray.origin;
    rays.directions[r] = ray.direction;
    rays.gt_color[r] = f.color(u, v);
    const double z = f.depth_at(u, v);
    rays.gt_depth[r] = z > 0.0 ? z * ray.z_to_range : 0.0;
    rays.frame_ids[r] = static_cast<int>(fi);
    if (dim > 0) {
      std::span<float> row(rays.gt_feature.data() + r * static_cast<std::size_t>(dim),
                           static_cast<std::size_t>(dim));
      rays.feature_valid[r] = frames.pixel_feature(fi, u, v, row) ? 1 : 0;
    }
  }
  return rays;
}

std::vector<int> classify_rays(const RayBundle& rays, const ClassPrompts& prompts) {
  std::vector<int> ids(rays.size(), kUnclassified);
  if (!rays.has_features()) {
    return ids;
  }
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (rays.feature_valid[r]) {
      ids[r] = classify_measurement(rays.feature(r), prompts);
    }
  }
  return ids;
}

LossReport train_step(TrainState& state, const RayBundle& batch, const LossWeights& weights,
                      const TrainConfig& config, const ClassPrompts* prompts) {
  SamplingConfig sampling;
  sampling.n_samples = config.samples_per_ray;
  sampling.truncation = weights.truncation;
  sampling.jitter = true;
  const RaySamples samples = sample_bundle(batch, state.fields.bounds(), sampling, &state.rng);

  const bool use_scp = config.scp_enabled && prompts != nullptr && batch.has_features() &&
                       state.beliefs.class_count() > 0;
  std::vector<int> class_ids;
  ScpContext ctx;
  if (use_scp) {
    class_ids = classify_rays(batch, *prompts);
    ctx.beliefs = &state.beliefs;
    ctx.class_ids = class_ids;
  }
  if (state.gradient.blocks.empty()) {
    state.gradient = FieldGradient(state.fields);
  }
  const BatchOutput out = evaluate_batch(state.fields, batch, samples, weights,
                                         use_scp ? &ctx : nullptr, &state.gradient,
                                         config.execution);
  const std::string bad = first_non_finite(out.report);
  if (!bad.empty()) {
    throw NumericalError("non-finite " + bad + " loss at step " + std::to_string(state.step));
  }
  state.optimizer.step(state.fields, state.gradient);

  if (use_scp) {
    MeasurementBatch measurements;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      if (out.cell_ids[r] >= 0 && class_ids[r] != kUnclassified) {
        measurements.cell_ids.push_back(out.cell_ids[r]);
        measurements.class_ids.push_back(class_ids[r]);
      }
    }
    fold_batch(state.beliefs, measurements);
  }
  update_running(state.running, out.report, state.step == 0);
  ++state.step;
  return out.report;
}

void resume(TrainState& state, const FrameSet& frames, const TrainConfig& config,
            const LossWeights& weights, const FitHooks& hooks) {
  config.validate();
  weights.validate();
  const ClassPrompts* prompts = frames.prompts ? &*frames.prompts : nullptr;
  if (!hooks.checkpoint_dir.empty() && config.checkpoint_every > 0) {
    fs::create_directories(hooks.checkpoint_dir);
  }
  while (state.step < config.iterations) {
    const RayBundle batch = sample_batch(frames, config, state.rng);
    const LossReport report = train_step(state, batch, weights, config, prompts);
    if (hooks.log != nullptr && (state.step % config.log_every == 0 || state.step == 1)) {
      *hooks.log << log_line(state.step, report) << '\n';
      hooks.log->flush();
    }
    if (!hooks.checkpoint_dir.empty() && config.checkpoint_every > 0 &&
        state.step % config.checkpoint_every == 0) {
      save_train_state(hooks.checkpoint_dir, checkpoint_stem(state.step), state);
    }
    if (hooks.on_step) {
      hooks.on_step(state, report);
    }
  }
}

TrainState fit(const FrameSet& frames, const TrainConfig& config, const LossWeights& weights,
               const FitHooks& hooks) {
  TrainState state = init_state(frames, config);
  resume(state, frames, config, weights, hooks);
  return state;
}

std::string checkpoint_stem(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld", static_cast<long long>(step));
  return buf;
}

void save_train_state(const fs::path& dir, const std::string& stem, const TrainState& state) {
  save_checkpoint(dir / (stem + ".ooc"), state.fields);
  if (state.beliefs.class_count() > 0) {
    save_beliefs(dir / (stem + ".obg"), state.beliefs);
  }
  const fs::path path = dir / (stem + ".ots");
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  detail::write_magic(out, kStateMagic);
  detail::write_pod(out, static_cast<std::int64_t>(state.step));
  const std::string rng = state.rng.serialize();
  detail::write_pod(out, static_cast<std::uint32_t>(rng.size()));
  out.write(rng.data(), static_cast<std::streamsize>(rng.size()));
  const double running[6] = {state.running.rgb, state.running.depth, state.running.occ,
                             state.running.fs,  state.running.sg,    state.running.total};
  detail::write_array<double>(out, running);
  state.optimizer.write(out);
  if (!out) {
    throw FormatError("failed writing " + path.string());
  }
}

TrainState load_train_state(const fs::path& dir, const std::string& stem,
                            const TrainConfig& config) {
  TrainState state;
  state.fields = load_checkpoint(dir / (stem + ".ooc"));
  if (fs::exists(dir / (stem + ".obg"))) {
    state.beliefs = load_beliefs(dir / (stem + ".obg"));
  }
  const fs::path path = dir / (stem + ".ots");
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("trainer state not found: " + path.string());
  }
  const std::string what = path.string();
  detail::expect_magic(in, kStateMagic, what);
  state.step = detail::read_pod<std::int64_t>(in, what);
  const auto len = detail::read_pod<std::uint32_t>(in, what);
  if (len > (1u << 20)) {
    throw FormatError(what + ": implausible RNG state size");
  }
  std::string rng(len, '\0');
  in.read(rng.data(), len);
  if (!in) {
    throw FormatError(what + ": truncated RNG state");
  }
  state.rng.deserialize(rng);
  double running[6];
  detail::read_array<double>(in, running, what);
  state.running.rgb = running[0];
  state.running.depth = running[1];
  state.running.occ = running[2];
  state.running.fs = running[3];
  state.running.sg = running[4];
  state.running.total = running[5];
  state.optimizer = Adam::read(in, adam_config(config));
  state.gradient = FieldGradient(state.fields);
  return state;
}

std::string log_line(std::int64_t step, const LossReport& report) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["rgb"] = report.rgb;
  j["depth"] = report.depth;
  j["occ"] = report.occ;
  j["fs"] = report.fs;
  j["sg"] = report.sg;
  j["total"] = report.total;
  return j.dump();
}

}  // namespace langocc
