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


// Compares the OpenMP batch kernel with its serial schedule and with the
// per-sample reference on a synthetic room.

#include <benchmark/benchmark.h>

#include "langocc/batch_kernel.hpp"
#include "langocc/synthetic.hpp"
#include "langocc/trainer.hpp"

namespace {

using namespace langocc;

struct Fixture {
  TrainState state;
  RayBundle rays;
  RaySamples samples;
  LossWeights weights;

  Fixture() {
    const SyntheticScene scene = two_box_room(8, 64, 64, 16, 1);
    const SyntheticFrames data = generate_synthetic(scene, {});
    TrainConfig config;
    config.rays_per_batch = 1024;
    config.samples_per_ray = 64;
    config.field.hidden_width = 32;
    state = init_state(data.frames, config);
    state.gradient = FieldGradient(state.fields);
    rays = sample_batch(data.frames, config, state.rng);
    SamplingConfig sampling;
    sampling.n_samples = config.samples_per_ray;
    samples = sample_bundle(rays, state.fields.bounds(), sampling, &state.rng);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_BatchParallel(benchmark::State& st) {
  Fixture& f = fixture();
  for (auto _ : st) {
    benchmark::DoNotOptimize(evaluate_batch(f.state.fields, f.rays, f.samples, f.weights, nullptr,
                                            &f.state.gradient, Execution::kParallel));
  }
}

void BM_BatchSerial(benchmark::State& st) {
  Fixture& f = fixture();
  for (auto _ : st) {
    benchmark::DoNotOptimize(evaluate_batch(f.state.fields, f.rays, f.samples, f.weights, nullptr,
                                            &f.state.gradient, Execution::kSerial));
  }
}

void BM_BatchReference(benchmark::State& st) {
  Fixture& f = fixture();
  for (auto _ : st) {
    benchmark::DoNotOptimize(evaluate_batch_reference(f.state.fields, f.rays, f.samples,
                                                      f.weights, nullptr, &f.state.gradient));
  }
}

BENCHMARK(BM_BatchParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchReference)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
