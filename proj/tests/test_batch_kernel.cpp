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
#include <vector>

#include "langocc/batch_kernel.hpp"
#include "test_support.hpp"

using namespace langocc;

namespace {

struct Problem {
  FieldSet fields;
  RayBundle rays;
  RaySamples samples;
  BeliefGrid beliefs;
  std::vector<int> classes;
};

Problem make_problem(std::uint64_t seed, std::size_t n_rays, int n_samples) {
  Problem p;
  p.fields = testing::small_fields(seed);
  Rng rng(seed + 100);
  p.rays = testing::random_rays(n_rays, 4, rng);
  SamplingConfig config;
  config.n_samples = n_samples;
  p.samples = sample_bundle(p.rays, p.fields.bounds(), config, &rng);
  p.beliefs = BeliefGrid(p.fields.bounds(), {3, 3, 3}, 3);
  for (double& v : p.beliefs.logodds()) {
    v = rng.uniform(-4.0, 4.0);
  }
  for (std::size_t r = 0; r < n_rays; ++r) {
    p.classes.push_back(static_cast<int>(rng.below(4)) - 1);
  }
  return p;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  const Problem p = make_problem(31, 8, 8);
  const ScpContext scp{&p.beliefs, p.classes};
  for (bool robust : {true, false}) {
    LossWeights w;
    w.robust_kernel = robust;
    const testing::GradientCheck check = testing::check_gradients(p.fields, p.rays, p.samples, w,
                                                                  &scp);
    CHECK(check.pass_rate() >= 0.99);
  }
}

TEST_CASE("serial and parallel schedules agree bit for bit") {
  const Problem p = make_problem(2, 700, 20);
  const ScpContext scp{&p.beliefs, p.classes};
  FieldGradient ga(p.fields), gb(p.fields);
  const BatchOutput a =
      evaluate_batch(p.fields, p.rays, p.samples, LossWeights{}, &scp, &ga, Execution::kSerial);
  const BatchOutput b =
      evaluate_batch(p.fields, p.rays, p.samples, LossWeights{}, &scp, &gb, Execution::kParallel);
  CHECK(a.report.total == b.report.total);
  CHECK(a.depth == b.depth);
  CHECK(a.cell_ids == b.cell_ids);
  CHECK(a.sg_weights == b.sg_weights);
  CHECK(ga.flatten() == gb.flatten());
  CHECK(ga.touched == gb.touched);
}

TEST_CASE("chunked kernel agrees with the reference") {
  const Problem p = make_problem(3, 300, 16);
  const ScpContext scp{&p.beliefs, p.classes};
  FieldGradient ga(p.fields), gb(p.fields);
  const BatchOutput a = evaluate_batch(p.fields, p.rays, p.samples, LossWeights{}, &scp, &ga);
  const BatchOutput b =
      evaluate_batch_reference(p.fields, p.rays, p.samples, LossWeights{}, &scp, &gb);
  CHECK(a.report.total == doctest::Approx(b.report.total).epsilon(1e-12));
  CHECK(a.report.sg_rays == b.report.sg_rays);
  CHECK(a.cell_ids == b.cell_ids);
  const auto fa = ga.flatten();
  const auto fb = gb.flatten();
  double scale = 0.0;
  double diff = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) {
    scale = std::max(scale, std::abs(fb[k]));
    diff = std::max(diff, std::abs(fa[k] - fb[k]));
  }
  CHECK(diff <= 1e-10 * scale);
}

TEST_CASE("neutral confidence reduces to the unweighted objective") {
  Problem p = make_problem(4, 200, 12);
  std::fill(p.beliefs.logodds().begin(), p.beliefs.logodds().end(), 0.0);
  const ScpContext scp{&p.beliefs, p.classes};
  FieldGradient ga(p.fields), gb(p.fields);
  const BatchOutput a = evaluate_batch(p.fields, p.rays, p.samples, LossWeights{}, &scp, &ga);
  const BatchOutput b = evaluate_batch(p.fields, p.rays, p.samples, LossWeights{}, nullptr, &gb);
  for (double w : a.sg_weights) {
    CHECK(w == 1.0);
  }
  CHECK(a.report.total == b.report.total);
  CHECK(ga.flatten() == gb.flatten());
}

TEST_CASE("zero distillation weight removes semantic gradients") {
  const Problem p = make_problem(5, 64, 12);
  LossWeights w;
  w.sg = 0.0;
  FieldGradient g(p.fields);
  evaluate_batch(p.fields, p.rays, p.samples, w, nullptr, &g);
  const BlockIndex idx = block_index(p.fields);
  for (std::size_t b = idx.semantic; b < idx.semantic + p.fields.semantic.levels().size(); ++b) {
    for (double v : g.blocks[b]) {
      CHECK(v == 0.0);
    }
  }
  for (double v : g.blocks[idx.sem_decoder]) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("rays outside the bounds contribute nothing") {
  Problem p = make_problem(6, 10, 8);
  RayBundle rays = p.rays;
  rays.origins.push_back(Vec3(5, 5, 5));
  rays.directions.push_back(Vec3(1, 0, 0));
  rays.gt_color.push_back(Vec3(1, 1, 1));
  rays.gt_depth.push_back(1.0);
  rays.frame_ids.push_back(0);
  for (int k = 0; k < 4; ++k) {
    rays.gt_feature.push_back(k == 0 ? 1.0f : 0.0f);
  }
  rays.feature_valid.push_back(1);
  SamplingConfig config;
  config.n_samples = 8;
  Rng rng(1);
  const RaySamples s = sample_bundle(rays, p.fields.bounds(), config, &rng);
  RaySamples head = s;
  head.depths.resize(10 * 8);
  head.valid.resize(10 * 8);
  const BatchOutput with = evaluate_batch(p.fields, rays, s, LossWeights{}, nullptr, nullptr);
  const BatchOutput without =
      evaluate_batch(p.fields, p.rays, head, LossWeights{}, nullptr, nullptr);
  CHECK(with.report.total == without.report.total);
  CHECK(with.report.rgb_rays == 10);
  CHECK(with.weight_sum.back() == 0.0);
}

TEST_CASE("mismatched inputs are rejected") {
  Problem p = make_problem(7, 8, 8);
  RayBundle wrong = p.rays;
  wrong.feat_dim = 3;
  CHECK_THROWS_AS(evaluate_batch(p.fields, wrong, p.samples, LossWeights{}, nullptr, nullptr),
                  DomainError);
  const std::vector<int> few = {0, 1};
  const ScpContext scp{&p.beliefs, few};
  CHECK_THROWS_AS(evaluate_batch(p.fields, p.rays, p.samples, LossWeights{}, &scp, nullptr),
                  DomainError);
}
