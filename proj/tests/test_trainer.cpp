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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "langocc/synthetic.hpp"
#include "langocc/trainer.hpp"
#include "test_support.hpp"

using namespace langocc;
namespace fs = std::filesystem;

namespace {

const FrameSet& room_frames() {
  static const FrameSet frames = [] {
    SyntheticFrames data = generate_synthetic(two_box_room(6, 24, 24, 8, 1), {});
    return std::move(data.frames);
  }();
  return frames;
}

TrainConfig small_config(int iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.rays_per_batch = 128;
  c.samples_per_ray = 16;
  c.seed = 5;
  c.log_every = 1;
  c.checkpoint_every = 0;
  c.field.levels = 2;
  c.field.coarse_divisions = 6.0;
  c.field.hidden_width = 16;
  c.field.geometry_feat_dim = 2;
  c.field.color_feat_dim = 2;
  c.field.semantic_feat_dim = 4;
  return c;
}

std::vector<float> parameters(const FieldSet& f) {
  std::vector<float> out;
  for (std::span<const float> block : f.parameter_blocks()) {
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

bool same_report(const LossReport& a, const LossReport& b) {
  return a.rgb == b.rgb && a.depth == b.depth && a.occ == b.occ && a.fs == b.fs &&
         a.sg == b.sg && a.total == b.total;
}

std::vector<LossReport> run(const TrainConfig& config, TrainState* final_state = nullptr) {
  std::vector<LossReport> stream;
  FitHooks hooks;
  hooks.on_step = [&](const TrainState&, const LossReport& r) { stream.push_back(r); };
  TrainState s = fit(room_frames(), config, LossWeights{}, hooks);
  if (final_state != nullptr) {
    *final_state = std::move(s);
  }
  return stream;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c = small_config(1);
  CHECK_NOTHROW(c.validate());
  c.rays_per_batch = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config(1);
  c.iterations = -1;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config(1);
  c.lr_grids = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = small_config(1);
  c.samples_per_ray = 1;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("paper defaults") {
  const TrainConfig c;
  CHECK(c.rays_per_batch == 6144);
  CHECK(c.samples_per_ray == 132);
  CHECK(c.lr_decoders == 1e-2);
  CHECK(c.lr_grids == 1e-3);
  CHECK(c.iterations == 10000);
}

TEST_CASE("sample_batch") {
  const TrainConfig c = small_config(1);
  Rng a(3);
  Rng b(3);
  const RayBundle x = sample_batch(room_frames(), c, a);
  const RayBundle y = sample_batch(room_frames(), c, b);
  CHECK(x.size() == 128);
  CHECK(x.origins == y.origins);
  CHECK(x.directions == y.directions);
  CHECK(x.gt_depth == y.gt_depth);
  CHECK(x.gt_feature == y.gt_feature);
  CHECK_NOTHROW(x.validate());

  SUBCASE("batch size is exact") {
    TrainConfig big = c;
    big.rays_per_batch = 6144;
    Rng r(1);
    CHECK(sample_batch(room_frames(), big, r).size() == 6144);
  }
  SUBCASE("a one-pixel camera samples its optical axis") {
    FrameSet one;
    one.intrinsics = Intrinsics{1.0, 1.0, 0.0, 0.0};
    Frame f;
    f.width = 1;
    f.height = 1;
    f.rgb = {10, 20, 30};
    f.depth = {2.0f};
    f.pose = room_frames().frames[1].pose;
    one.frames.push_back(f);
    Rng r(9);
    const RayBundle rays = sample_batch(one, c, r);
    for (std::size_t k = 0; k < rays.size(); ++k) {
      CHECK((rays.directions[k] - f.pose.block<3, 1>(0, 2)).norm() < 1e-15);
      CHECK(rays.gt_depth[k] == doctest::Approx(2.0));
    }
  }
}

TEST_CASE("zero iterations leave the initial state untouched") {
  TrainState s;
  run(small_config(0), &s);
  const TrainState fresh = init_state(room_frames(), small_config(0));
  CHECK(s.step == 0);
  CHECK(parameters(s.fields) == parameters(fresh.fields));
  CHECK(s.rng == fresh.rng);
}

TEST_CASE("identical seeds give identical loss streams") {
  const std::vector<LossReport> a = run(small_config(5));
  const std::vector<LossReport> b = run(small_config(5));
  REQUIRE(a.size() == 5);
  REQUIRE(b.size() == 5);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(same_report(a[k], b[k]));
  }
  TrainConfig other = small_config(5);
  other.seed = 6;
  CHECK_FALSE(same_report(run(other)[0], a[0]));
}

TEST_CASE("serial and parallel execution train identically") {
  TrainConfig c = small_config(3);
  c.execution = Execution::kSerial;
  TrainState serial;
  TrainState parallel;
  run(c, &serial);
  c.execution = Execution::kParallel;
  run(c, &parallel);
  CHECK(parameters(serial.fields) == parameters(parallel.fields));
}

TEST_CASE("checkpoint and resume reproduce the uninterrupted run") {
  testing::ScratchDir dir("resume");
  TrainConfig c = small_config(6);
  c.checkpoint_every = 3;
  std::vector<LossReport> straight;
  FitHooks hooks;
  hooks.checkpoint_dir = dir.path();
  hooks.on_step = [&](const TrainState&, const LossReport& r) { straight.push_back(r); };
  const TrainState full = fit(room_frames(), c, LossWeights{}, hooks);
  CHECK(fs::exists(dir.path() / "step_000003.ooc"));
  CHECK(fs::exists(dir.path() / "step_000003.ots"));
  CHECK(fs::exists(dir.path() / "step_000003.obg"));
  CHECK(fs::exists(dir.path() / "step_000006.ooc"));

  TrainState resumed = load_train_state(dir.path(), "step_000003", c);
  CHECK(resumed.step == 3);
  std::vector<LossReport> tail;
  FitHooks after;
  after.on_step = [&](const TrainState&, const LossReport& r) { tail.push_back(r); };
  resume(resumed, room_frames(), c, LossWeights{}, after);
  REQUIRE(tail.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(same_report(tail[k], straight[k + 3]));
  }
  CHECK(parameters(resumed.fields) == parameters(full.fields));
  CHECK(resumed.beliefs.logodds() == full.beliefs.logodds());
  CHECK(resumed.rng == full.rng);
}

TEST_CASE("log lines are JSON objects per interval") {
  TrainConfig c = small_config(4);
  c.log_every = 2;
  std::ostringstream log;
  FitHooks hooks;
  hooks.log = &log;
  fit(room_frames(), c, LossWeights{}, hooks);
  std::istringstream in(log.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("{\"step\":1,", 0) == 0);
  CHECK(lines[1].rfind("{\"step\":2,", 0) == 0);
  CHECK(lines[2].rfind("{\"step\":4,", 0) == 0);
}

TEST_CASE("total loss trends down over a 100-step window") {
  const std::vector<LossReport> stream = run(small_config(100));
  REQUIRE(stream.size() == 100);
  auto mean_total = [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      s += stream[k].total;
    }
    return s / static_cast<double>(hi - lo);
  };
  CHECK(mean_total(80, 100) < 0.8 * mean_total(0, 20));
}

TEST_CASE("non-finite parameters stop the step before any update") {
  TrainConfig c = small_config(1);
  TrainState s = init_state(room_frames(), c);
  s.fields.occ_decoder.params()[0] = std::numeric_limits<float>::quiet_NaN();
  const std::vector<float> before = parameters(s.fields);
  Rng r(2);
  const RayBundle batch = sample_batch(room_frames(), c, r);
  const ClassPrompts& prompts = *room_frames().prompts;
  CHECK_THROWS_AS(train_step(s, batch, LossWeights{}, c, &prompts), NumericalError);
  CHECK(s.step == 0);
  const std::vector<float> after = parameters(s.fields);
  REQUIRE(after.size() == before.size());
  for (std::size_t k = 0; k < after.size(); ++k) {
    CHECK((after[k] == before[k] || (std::isnan(after[k]) && std::isnan(before[k]))));
  }
}

TEST_CASE("grid vertices away from every ray keep their values") {
  TrainConfig c = small_config(1);
  c.bounds = SceneBounds(Vec3::Zero(), Vec3::Ones());
  TrainState s = init_state(room_frames(), c);
  const FieldSet before = s.fields;
  // Rays along +x in the plane z = 0.05; they never reach vertices with
  // z >= 0.5 on any level.
  RayBundle rays;
  rays.resize(64, room_frames().feature_dim());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    rays.origins[r] = Vec3(0.01, 0.01 + 0.015 * static_cast<double>(r), 0.05);
    rays.directions[r] = Vec3::UnitX();
    rays.gt_color[r] = Vec3(0.5, 0.5, 0.5);
    rays.gt_depth[r] = 0.5;
    rays.feature_valid[r] = 0;
  }
  train_step(s, rays, LossWeights{}, c, nullptr);
  int changed_near = 0;
  for (const MultiResGrid* g : {&s.fields.geometry, &s.fields.color}) {
    const MultiResGrid& old = g == &s.fields.geometry ? before.geometry : before.color;
    for (std::size_t l = 0; l < g->levels().size(); ++l) {
      const GridLevel& lv = g->levels()[l];
      const GridLevel& ov = old.levels()[l];
      for (int z = 0; z < lv.resolution[2]; ++z) {
        for (int y = 0; y < lv.resolution[1]; ++y) {
          for (int x = 0; x < lv.resolution[0]; ++x) {
            const std::size_t v = lv.vertex_index(x, y, z);
            for (int d = 0; d < lv.feat_dim; ++d) {
              const std::size_t k = v * lv.feat_dim + d;
              if (z * lv.voxel_size[2] >= 0.5) {
                CHECK(lv.features[k] == ov.features[k]);
              } else if (lv.features[k] != ov.features[k]) {
                ++changed_near;
              }
            }
          }
        }
      }
    }
  }
  CHECK(changed_near > 0);
  CHECK(s.fields.semantic.levels()[0].features == before.semantic.levels()[0].features);
}
