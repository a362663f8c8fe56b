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

#include "langocc/checkpoint.hpp"
#include "langocc/grid_field.hpp"
#include "test_support.hpp"

using namespace langocc;

namespace {

MultiResGrid affine_grid(const SceneBounds& b, const std::vector<std::array<int, 3>>& res,
                         const Eigen::Matrix<double, 2, 3>& a, const Eigen::Vector2d& c) {
  MultiResGrid g = MultiResGrid::zeros(b, res, std::vector<int>(res.size(), 2));
  for (GridLevel& level : g.levels()) {
    for (int z = 0; z < level.resolution[2]; ++z) {
      for (int y = 0; y < level.resolution[1]; ++y) {
        for (int x = 0; x < level.resolution[0]; ++x) {
          const Vec3 p = b.min_corner + Vec3(x * level.voxel_size[0], y * level.voxel_size[1],
                                             z * level.voxel_size[2]);
          const Eigen::Vector2d f = a * p + c;
          float* dst = level.features.data() + level.vertex_index(x, y, z) * 2;
          dst[0] = static_cast<float>(f[0]);
          dst[1] = static_cast<float>(f[1]);
        }
      }
    }
  }
  return g;
}

// Central differences of a scalar function of float parameters with the
// realized step as denominator.
template <typename F>
double central_difference(float& p, double h, F&& f) {
  const float p0 = p;
  const float hi = static_cast<float>(p0 + h);
  const float lo = static_cast<float>(p0 - h);
  p = hi;
  const double f_hi = f();
  p = lo;
  const double f_lo = f();
  p = p0;
  return (f_hi - f_lo) / (static_cast<double>(hi) - lo);
}

double rel_error(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s < 1e-7 ? 0.0 : std::abs(a - b) / s;
}

}  // namespace

TEST_CASE("query at a vertex returns that vertex's features") {
  const SceneBounds b(Vec3::Zero(), Vec3(2, 2, 2));
  MultiResGrid g = MultiResGrid::zeros(b, {{3, 3, 3}, {5, 5, 5}}, {1, 2});
  Rng rng(3);
  testing::randomize(g, rng, 1.0);
  const Vec3 p(1.0, 0.5, 1.5);
  const std::vector<double> f = g.query_concat(p);
  const GridLevel& l0 = g.levels()[0];
  const GridLevel& l1 = g.levels()[1];
  // Level 0 has 1 m voxels: p lies on an edge, interpolating x-neighbours.
  const double half = 0.5 * (l0.features[l0.vertex_index(1, 0, 1)] * 0.5 +
                             l0.features[l0.vertex_index(1, 0, 2)] * 0.5) +
                      0.5 * (l0.features[l0.vertex_index(1, 1, 1)] * 0.5 +
                             l0.features[l0.vertex_index(1, 1, 2)] * 0.5);
  CHECK(f[0] == doctest::Approx(half).epsilon(1e-12));
  const std::size_t v = l1.vertex_index(2, 1, 3);
  CHECK(f[1] == doctest::Approx(l1.features[v * 2]).epsilon(1e-12));
  CHECK(f[2] == doctest::Approx(l1.features[v * 2 + 1]).epsilon(1e-12));
}

TEST_CASE("single level linear interpolation along x") {
  const SceneBounds b(Vec3::Zero(), Vec3::Ones());
  MultiResGrid g = MultiResGrid::zeros(b, {{2, 2, 2}}, {1});
  for (int z = 0; z < 2; ++z) {
    for (int y = 0; y < 2; ++y) {
      g.levels()[0].features[g.levels()[0].vertex_index(1, y, z)] = 1.0f;
    }
  }
  CHECK(g.query_concat(Vec3(0.25, 0.7, 0.1))[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("trilinear interpolation reproduces affine fields") {
  const SceneBounds b(Vec3(-1, 0, 0.5), Vec3(1.5, 2, 1.5));
  Eigen::Matrix<double, 2, 3> a;
  a << 0.3, -0.2, 0.7, 1.1, 0.4, -0.5;
  const Eigen::Vector2d c(0.25, -0.125);
  const MultiResGrid g = affine_grid(b, {{3, 4, 5}, {6, 7, 9}}, a, c);
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p(rng.uniform(-1, 1.5), rng.uniform(0, 2), rng.uniform(0.5, 1.5));
    const std::vector<double> f = g.query_concat(p);
    const Eigen::Vector2d want = a * p + c;
    for (int l = 0; l < 2; ++l) {
      for (int k = 0; k < 2; ++k) {
        CHECK(std::abs(f[l * 2 + k] - want[k]) <= 1e-6 * std::max(1.0, std::abs(want[k])));
      }
    }
  }
}

TEST_CASE("query is continuous across cell faces") {
  const FieldSet f = testing::small_fields(5);
  const double face = f.geometry.levels()[0].voxel_size[0];
  for (double eps : {1e-3, 1e-5, 1e-7}) {
    const auto lo = f.geometry.query_concat(Vec3(face - eps, 0.4, 0.6));
    const auto hi = f.geometry.query_concat(Vec3(face + eps, 0.4, 0.6));
    for (std::size_t k = 0; k < lo.size(); ++k) {
      CHECK(std::abs(lo[k] - hi[k]) <= 200.0 * eps);
    }
  }
}

TEST_CASE("queries outside the bounds are rejected") {
  const FieldSet f = testing::small_fields(5);
  CHECK_THROWS_AS(f.geometry.query_concat(Vec3(1.01, 0.5, 0.5)), DomainError);
  CHECK_THROWS_AS(occupancy(f, Vec3(-0.1, 0.5, 0.5)), DomainError);
}

TEST_CASE("decoder heads") {
  FieldSet f = testing::small_fields(7);
  const Vec3 p(0.3, 0.6, 0.2);

  SUBCASE("zero decoders") {
    std::fill(f.occ_decoder.params().begin(), f.occ_decoder.params().end(), 0.0f);
    std::fill(f.color_decoder.params().begin(), f.color_decoder.params().end(), 0.0f);
    std::fill(f.sem_decoder.params().begin(), f.sem_decoder.params().end(), 0.0f);
    CHECK(occupancy(f, p) == 0.5);
    const Vec3 c = color(f, p, Vec3(0, 0, 1));
    CHECK(c == Vec3(0.5, 0.5, 0.5));
    for (double v : semantic(f, p)) {
      CHECK(v == 0.0);
    }
  }

  SUBCASE("saturated logit") {
    std::fill(f.occ_decoder.params().begin(), f.occ_decoder.params().end(), 0.0f);
    f.occ_decoder.params()[f.occ_decoder.bias_offset(f.occ_decoder.layer_count() - 1)] = 20.0f;
    CHECK(occupancy(f, p) == doctest::Approx(1.0).epsilon(1e-8));
  }

  SUBCASE("view direction changes color") {
    const Vec3 c1 = color(f, p, Vec3(1, 0, 0));
    const Vec3 c2 = color(f, p, Vec3(0, 1, 0));
    CHECK((c1 - c2).norm() > 1e-6);
    CHECK_THROWS_AS(color(f, p, Vec3(1, 1, 0)), DomainError);
  }

  SUBCASE("codomains on random inputs") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      const Vec3 q(rng.uniform(), rng.uniform(), rng.uniform());
      const double o = occupancy(f, q);
      CHECK(o > 0.0);
      CHECK(o < 1.0);
      const Vec3 c = color(f, q, testing::random_unit(rng));
      CHECK(c.minCoeff() >= 0.0);
      CHECK(c.maxCoeff() <= 1.0);
    }
  }

  SUBCASE("constant semantic grid decodes to a constant") {
    for (GridLevel& l : f.semantic.levels()) {
      for (std::size_t i = 0; i < l.features.size(); ++i) {
        l.features[i] = 0.1f * static_cast<float>(i % l.feat_dim);
      }
    }
    const auto a = semantic(f, Vec3(0.1, 0.2, 0.3));
    const auto b = semantic(f, Vec3(0.9, 0.5, 0.7));
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
    }
  }

  SUBCASE("mismatched semantic width is rejected") {
    f.semantic_dim = 5;
    CHECK_THROWS_AS(f.validate(), DomainError);
  }
}

TEST_CASE("default field creation") {
  const SceneBounds b(Vec3::Zero(), Vec3(2.2, 2.2, 1.6));
  FieldConfig config;
  config.hidden_width = 16;
  const FieldSet f = FieldSet::create(b, config, 1);
  REQUIRE(f.geometry.levels().size() == 4);
  const double coarse = b.diagonal() / 16.0;
  for (int l = 0; l < 4; ++l) {
    const GridLevel& level = f.geometry.levels()[l];
    for (int a = 0; a < 3; ++a) {
      CHECK(level.voxel_size[a] <= coarse / std::pow(2.0, l) + 1e-12);
      CHECK(level.voxel_size[a] * (level.resolution[a] - 1) ==
            doctest::Approx(b.extent()[a]).epsilon(1e-9));
    }
  }
  CHECK(f.geometry.total_feat_dim() == 16);
  CHECK(f.color.total_feat_dim() == 16);
  CHECK(f.semantic.total_feat_dim() == 32);
  CHECK(f.sem_decoder.output_dim() == 16);
  for (const GridLevel& level : f.color.levels()) {
    for (float v : level.features) {
      CHECK(std::abs(v) <= 1e-2f);
    }
  }
  // A zero feature decodes to the empty-space prior.
  const std::vector<double> zero(16, 0.0);
  CHECK(sigmoid(f.occ_decoder.evaluate(zero)[0]) == doctest::Approx(0.1).epsilon(1e-5));
}

TEST_CASE("field gradients match central differences") {
  FieldSet f = testing::small_fields(21);
  Rng rng(4);
  const Vec3 p(0.37, 0.52, 0.81);
  const Vec3 d = testing::random_unit(rng);
  const Vec3 d_rgb(0.3, -1.2, 0.7);
  std::vector<double> d_sem(4);
  for (double& v : d_sem) {
    v = rng.normal();
  }
  FieldGradient g(f);
  occupancy_backward(f, p, 1.0, g);
  color_backward(f, p, d, d_rgb, g);
  semantic_backward(f, p, d_sem, g);
  const std::vector<double> analytic = g.flatten();

  auto objective = [&] {
    double s = occupancy(f, p) + color(f, p, d).dot(d_rgb);
    const auto sem = semantic(f, p);
    for (int k = 0; k < 4; ++k) {
      s += sem[k] * d_sem[k];
    }
    return s;
  };
  std::size_t flat = 0;
  std::size_t failed = 0;
  for (std::span<float> block : f.parameter_blocks()) {
    for (float& v : block) {
      const double numeric = central_difference(v, 1e-4, objective);
      failed += rel_error(analytic[flat++], numeric) > 1e-3 ? 1 : 0;
    }
  }
  CHECK(flat == f.parameter_count());
  CHECK(failed == 0);
}

TEST_CASE("batched decoder agrees with the per-sample decoder") {
  Rng rng(13);
  Decoder dec = Decoder::create(7, 16, 2, 3, rng);
  testing::randomize(dec, rng, 3.0);
  const BatchDecoder batch(dec);
  const int n = 37;
  RowMatrix in(n, 7), d_out(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 7; ++k) {
      in(i, k) = rng.uniform(-4, 4);
    }
    for (int k = 0; k < 3; ++k) {
      d_out(i, k) = rng.normal();
    }
  }
  BatchDecoder::Tape tape;
  RowMatrix out, d_in;
  batch.forward(in, n, tape, out);
  std::vector<double> grad_batch(dec.params().size(), 0.0);
  batch.backward(in, n, tape, d_out, grad_batch.data(), &d_in);

  std::vector<double> grad_ref(dec.params().size(), 0.0);
  std::vector<double> t(dec.tape_size());
  for (int i = 0; i < n; ++i) {
    double o[3];
    double di[7];
    dec.forward(in.row(i).data(), t.data(), o);
    dec.backward(in.row(i).data(), t.data(), d_out.row(i).data(), grad_ref.data(), di);
    for (int k = 0; k < 3; ++k) {
      CHECK(out(i, k) == doctest::Approx(o[k]).epsilon(1e-12));
    }
    for (int k = 0; k < 7; ++k) {
      CHECK(d_in(i, k) == doctest::Approx(di[k]).epsilon(1e-10));
    }
  }
  for (std::size_t k = 0; k < grad_ref.size(); ++k) {
    CHECK(grad_batch[k] == doctest::Approx(grad_ref[k]).epsilon(1e-10));
  }
}

TEST_CASE("checkpoint round trip") {
  const FieldSet f = testing::small_fields(2, 5);
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "langocc_test_fields.ooc";
  save_checkpoint(path, f);
  const FieldSet g = load_checkpoint(path);
  CHECK(g == f);
  std::filesystem::remove(path);
}
