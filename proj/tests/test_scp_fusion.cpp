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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "langocc/scp_fusion.hpp"
#include "scp_oracle.hpp"

using namespace langocc;
using testing::random_batch;

namespace {

ClassPrompts axis_prompts(int k, int dim) {
  ClassPrompts p;
  p.dim = dim;
  for (int i = 0; i < k; ++i) {
    p.labels.push_back("class" + std::to_string(i));
    for (int j = 0; j < dim; ++j) {
      p.embeddings.push_back(i == j ? 1.0f : 0.0f);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("classify_measurement") {
  const ClassPrompts p = axis_prompts(4, 4);
  CHECK(classify_measurement(std::vector<double>{0, 0, 3, 0}, p) == 2);
  CHECK(classify_measurement(std::vector<double>{0.5, 0, 0, 0}, p) == 0);
  CHECK(classify_measurement(std::vector<double>{0, 1, 0, 1}, p) == 1);
  CHECK(classify_measurement(std::vector<double>{0, 0, 0, 0}, p) == kUnclassified);
}

TEST_CASE("observation log-odds") {
  const auto a = observation_logodds(std::vector<int>{3, 1});
  CHECK(a[0] == doctest::Approx(1.0986).epsilon(1e-4));
  CHECK(a[1] == doctest::Approx(-1.0986).epsilon(1e-4));
  const auto b = observation_logodds(std::vector<int>{4, 0});
  CHECK(b[0] == doctest::Approx(std::log(0.999 / 0.001)));
  CHECK(b[1] == doctest::Approx(std::log(0.001 / 0.999)));
  const auto c = observation_logodds(std::vector<int>{2, 2});
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
  CHECK_THROWS_AS(observation_logodds(std::vector<int>{0, 0}), DomainError);
}

TEST_CASE("update_cell") {
  CHECK(update_cell(std::vector<double>{0.0}, std::vector<double>{1.5})[0] == 1.5);
  const auto once = update_cell(std::vector<double>{0.0}, std::vector<double>{2.5});
  CHECK(update_cell(once, std::vector<double>{2.5})[0] == 5.0);
  CHECK(update_cell(std::vector<double>{9.0}, std::vector<double>{5.0})[0] == 10.0);
  CHECK(update_cell(std::vector<double>{-9.0}, std::vector<double>{-5.0})[0] == -10.0);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> b(3), o1(3), o2(3);
    for (int k = 0; k < 3; ++k) {
      b[k] = rng.uniform(-3, 3);
      o1[k] = rng.uniform(-3, 3);
      o2[k] = rng.uniform(-3, 3);
    }
    const auto x = update_cell(update_cell(b, o1), o2);
    const auto y = update_cell(update_cell(b, o2), o1);
    for (int k = 0; k < 3; ++k) {
      CHECK(x[k] == doctest::Approx(y[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("confidence_weights") {
  const auto a = confidence_weights(std::vector<double>{1.0986, -1.0986});
  CHECK(a == std::vector<double>{1.0, 0.0});
  const auto b = confidence_weights(std::vector<double>{0, 0, 0});
  for (double v : b) {
    CHECK(v == doctest::Approx(1.0 / 3.0));
  }
  CHECK(confidence_weights(std::vector<double>{2, 2}) == std::vector<double>{0.5, 0.5});
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> belief(5);
    for (double& v : belief) {
      v = rng.uniform(-10, 10);
    }
    const auto w = confidence_weights(belief);
    double sum = 0.0;
    for (double v : w) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("weigh_batch") {
  const SceneBounds bounds(Vec3::Zero(), Vec3::Ones());

  SUBCASE("fresh grid is neutral") {
    BeliefGrid g(bounds, {2, 2, 2}, 3);
    Rng rng(5);
    for (double w : weigh_batch(g, random_batch(rng, 8, 3, 50))) {
      CHECK(w == 1.0);
    }
  }

  SUBCASE("history favours the consistent class") {
    BeliefGrid g(bounds, {1, 1, 1}, 2);
    MeasurementBatch history;
    for (int i = 0; i < 10; ++i) {
      history.cell_ids.push_back(0);
      history.class_ids.push_back(i < 9 ? 0 : 1);
    }
    weigh_batch(g, history);
    CHECK(measurement_weight(g, 0, 0) > measurement_weight(g, 0, 1));
  }

  SUBCASE("a single contradicting measurement is suppressed") {
    BeliefGrid g(bounds, {1, 1, 1}, 4);
    MeasurementBatch consistent;
    consistent.cell_ids.assign(100, 0);
    consistent.class_ids.assign(100, 0);
    weigh_batch(g, consistent);
    MeasurementBatch odd;
    odd.cell_ids = {0};
    odd.class_ids = {1};
    CHECK(weigh_batch(g, odd)[0] < 0.05);
  }

  SUBCASE("matches the scalar oracle") {
    Rng rng(6);
    for (int trial = 0; trial < 300; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(4));
      BeliefGrid g(bounds, {2, 3, 2}, k);
      for (double& v : g.logodds()) {
        v = rng.uniform() < 0.3 ? 0.0 : rng.uniform(-10, 10);
      }
      testing::OracleGrid o = testing::to_oracle(g);
      for (int step = 0; step < 3; ++step) {
        const MeasurementBatch b = random_batch(rng, g.cell_count(), k, 1 + rng.below(40));
        CHECK(weigh_batch(g, b) == testing::oracle_weigh(o, b));
        CHECK(testing::to_oracle(g).cells == o.cells);
      }
    }
  }

  SUBCASE("order within a batch does not matter") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      BeliefGrid g(bounds, {2, 2, 2}, 3);
      for (double& v : g.logodds()) {
        v = rng.uniform(-5, 5);
      }
      BeliefGrid h = g;
      MeasurementBatch b = random_batch(rng, 8, 3, 30);
      std::vector<std::size_t> perm(b.size());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        perm[i] = i;
      }
      for (std::size_t i = perm.size(); i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
      }
      MeasurementBatch shuffled;
      for (std::size_t i : perm) {
        shuffled.cell_ids.push_back(b.cell_ids[i]);
        shuffled.class_ids.push_back(b.class_ids[i]);
      }
      const auto wa = weigh_batch(g, b);
      const auto wb = weigh_batch(h, shuffled);
      for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(wb[i] == wa[perm[i]]);
      }
      CHECK(g == h);
    }
  }
}

TEST_CASE("consistent measurements converge") {
  for (double p : {0.6, 0.8, 0.95}) {
    const auto curve = testing::convergence_curve(p, 4, 16, 60, 100, 8);
    for (std::size_t b = 1; b < curve.size(); ++b) {
      CHECK(curve[b] >= curve[b - 1] - 1e-2);
    }
    CHECK(curve.back() > 0.99);
  }
}

TEST_CASE("cell lookup and persistence") {
  const SceneBounds bounds(Vec3::Zero(), Vec3(2, 1, 1));
  BeliefGrid g(bounds, {4, 2, 2}, 3);
  CHECK(g.cell_of(Vec3(0.1, 0.1, 0.1)) == 0);
  CHECK(g.cell_of(Vec3(1.9, 0.9, 0.9)) == 15);
  CHECK(g.cell_of(Vec3(2.0, 1.0, 1.0)) == 15);
  CHECK(g.cell_of(Vec3(2.1, 0.5, 0.5)) == -1);
  for (double v : g.logodds()) {
    CHECK(v == 0.0);
  }
  Rng rng(9);
  for (double& v : g.logodds()) {
    v = rng.uniform(-10, 10);
  }
  const auto dir = std::filesystem::temp_directory_path();
  save_beliefs(dir / "langocc_test.obg", g);
  CHECK(load_beliefs(dir / "langocc_test.obg") == g);

  const ClassPrompts p = axis_prompts(3, 4);
  save_prompts(dir / "langocc_test_prompts.json", p);
  const ClassPrompts q = load_prompts(dir / "langocc_test_prompts.json");
  CHECK(q.labels == p.labels);
  CHECK(q.embeddings == p.embeddings);
  std::filesystem::remove(dir / "langocc_test.obg");
  std::filesystem::remove(dir / "langocc_test_prompts.json");
}
