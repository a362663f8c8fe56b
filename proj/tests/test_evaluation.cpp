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
#include <vector>

#include "langocc/evaluation.hpp"
#include "langocc/synthetic.hpp"
#include "metrics_oracle.hpp"
#include "test_support.hpp"

using namespace langocc;

TEST_CASE("reconstruction metrics on rigid shifts") {
  const std::vector<Vec3> gt = testing::lattice_cloud(6, 0.25);
  SUBCASE("identity") {
    const ReconMetrics m = recon_metrics(gt, gt);
    CHECK(m.acc == 0.0);
    CHECK(m.comp == 0.0);
    CHECK(m.chamfer_l1 == 0.0);
    CHECK(m.prec == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.fscore == 1.0);
  }
  SUBCASE("3 cm") {
    std::vector<Vec3> pred = gt;
    for (Vec3& p : pred) {
      p += Vec3(0.03, 0, 0);
    }
    const ReconMetrics m = recon_metrics(pred, gt, 0.05);
    CHECK(m.acc == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(m.comp == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(m.chamfer_l1 == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(m.prec == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.fscore == 1.0);
  }
  SUBCASE("10 cm") {
    std::vector<Vec3> pred = gt;
    for (Vec3& p : pred) {
      p += Vec3(0, 0.06, 0.08);
    }
    const ReconMetrics m = recon_metrics(pred, gt, 0.05);
    CHECK(m.acc == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(m.prec == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.fscore == 0.0);
  }
  SUBCASE("empty sets") {
    CHECK_THROWS_AS(recon_metrics(std::vector<Vec3>{}, gt), DomainError);
    CHECK_THROWS_AS(recon_metrics(gt, std::vector<Vec3>{}), DomainError);
  }
}

TEST_CASE("reconstruction metrics swap with their arguments") {
  Rng rng(1);
  std::vector<Vec3> a, b;
  for (int i = 0; i < 400; ++i) {
    a.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  for (int i = 0; i < 300; ++i) {
    b.emplace_back(rng.uniform(), rng.uniform(), rng.uniform() * 0.5);
  }
  const ReconMetrics ab = recon_metrics(a, b, 0.05);
  const ReconMetrics ba = recon_metrics(b, a, 0.05);
  CHECK(ab.acc == ba.comp);
  CHECK(ab.comp == ba.acc);
  CHECK(ab.chamfer_l1 == doctest::Approx(ba.chamfer_l1).epsilon(1e-15));
  CHECK(ab.prec == ba.recall);
  CHECK(ab.recall == ba.prec);
  const double f = 2 * ab.prec * ab.recall / (ab.prec + ab.recall);
  CHECK(ab.fscore == doctest::Approx(f));
}

TEST_CASE("kd-tree matches exhaustive search") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(1000);
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < n; ++i) {
      // Snap to a coarse lattice so ties and duplicates occur.
      pts.emplace_back(std::round(rng.uniform(0, 10)) * 0.1, rng.uniform(), rng.uniform());
    }
    std::vector<Vec3> queries;
    for (int i = 0; i < 300; ++i) {
      queries.emplace_back(rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2), rng.uniform());
    }
    const KdTree tree(pts);
    CHECK(nearest_distances(queries, tree) == nearest_distances_brute(queries, pts));
    for (const Vec3& q : queries) {
      const KdTree::Hit hit = tree.nearest(q);
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if ((pts[i] - q).squaredNorm() < (pts[best] - q).squaredNorm()) {
          best = i;
        }
      }
      CHECK(hit.index == best);
    }
  }
  CHECK_THROWS_AS(KdTree(std::vector<Vec3>{}).nearest(Vec3::Zero()), DomainError);
}

TEST_CASE("segmentation metrics examples") {
  const std::vector<int> gt = {0, 0, 1, 1};
  SUBCASE("perfect") {
    const SegMetrics m = seg_metrics(gt, gt, 2);
    CHECK(m.miou == 1.0);
    CHECK(m.macc == 1.0);
  }
  SUBCASE("all flipped") {
    const SegMetrics m = seg_metrics(std::vector<int>{1, 1, 0, 0}, gt, 2);
    CHECK(m.miou == 0.0);
  }
  SUBCASE("everything class 0") {
    const SegMetrics m = seg_metrics(std::vector<int>{0, 0, 0, 0}, gt, 2);
    CHECK(m.iou[0] == 0.5);
    CHECK(m.iou[1] == 0.0);
    CHECK(m.miou == 0.25);
    CHECK(m.count(1, 0) == 2);
  }
  SUBCASE("classes absent from the ground truth are ignored") {
    const SegMetrics m = seg_metrics(std::vector<int>{0, 0, 2, 2}, gt, 3);
    CHECK(std::isnan(m.iou[2]));
    CHECK(m.miou == 0.5);
  }
  SUBCASE("void") {
    const SegMetrics m = seg_metrics(std::vector<int>{0, kVoidClass, 1, 1},
                                     std::vector<int>{0, 0, 1, kVoidClass}, 2);
    CHECK(m.iou[0] == 0.5);
    CHECK(m.acc[0] == 0.5);
    CHECK(m.iou[1] == 1.0);
    CHECK_THROWS_AS(seg_metrics(std::vector<int>{0}, std::vector<int>{kVoidClass}, 2),
                    DomainError);
    CHECK_THROWS_AS(seg_metrics(std::vector<int>{0, 1}, std::vector<int>{0}, 2), DomainError);
  }
}

TEST_CASE("segmentation metrics match exhaustive counting") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(6));
    const std::size_t n = 1 + rng.below(500);
    std::vector<int> pred(n), gt(n);
    for (std::size_t i = 0; i < n; ++i) {
      gt[i] = rng.uniform() < 0.1 ? kVoidClass : static_cast<int>(rng.below(k));
      pred[i] = rng.uniform() < 0.05 ? kVoidClass : static_cast<int>(rng.below(k));
    }
    gt[0] = 0;
    const SegMetrics m = seg_metrics(pred, gt, k);
    const testing::OracleSeg o = testing::oracle_seg(pred, gt, k);
    for (int c = 0; c < k; ++c) {
      CHECK(testing::same_or_both_nan(m.iou[c], o.iou[c], 1e-15));
      CHECK(testing::same_or_both_nan(m.acc[c], o.acc[c], 1e-15));
    }
    CHECK(m.miou == doctest::Approx(o.miou).epsilon(1e-14));
    CHECK(m.macc == doctest::Approx(o.macc).epsilon(1e-14));

    // Relabelling every class consistently leaves the means unchanged.
    std::vector<int> perm(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
      perm[c] = c;
    }
    for (int c = k; c > 1; --c) {
      std::swap(perm[c - 1], perm[rng.below(c)]);
    }
    auto relabel = [&](std::vector<int> v) {
      for (int& x : v) {
        x = x == kVoidClass ? x : perm[x];
      }
      return v;
    };
    const SegMetrics r = seg_metrics(relabel(pred), relabel(gt), k);
    CHECK(r.miou == doctest::Approx(m.miou).epsilon(1e-14));
    CHECK(r.macc == doctest::Approx(m.macc).epsilon(1e-14));
  }
}

TEST_CASE("mesh point sampling is area weighted and reproducible") {
  Mesh mesh;
  mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0),
                   Vec3(2, 0, 0), Vec3(4, 0, 0), Vec3(2, 1, 0)};
  mesh.faces = {{0, 1, 2}, {0, 2, 3}, {4, 5, 6}};
  std::vector<std::size_t> faces;
  const auto pts = sample_mesh_points(mesh, 4000.0, 5, &faces);
  CHECK(pts.size() == doctest::Approx(8000).epsilon(0.01));
  CHECK(sample_mesh_points(mesh, 4000.0, 5) == pts);
  std::size_t big = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    big += faces[i] == 2 ? 1 : 0;
    CHECK(pts[i][2] == 0.0);
  }
  // The third triangle holds half of the area.
  CHECK(static_cast<double>(big) / pts.size() == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("observation culling") {
  const SyntheticScene scene = two_box_room(4, 32, 32, 4, 1);
  const SyntheticFrames data = generate_synthetic(scene, {});
  // The room floor in front of the first camera is observed; a point hidden
  // inside a box is not.
  const SurfaceSamples surface = sample_surface(scene, 400.0, 2);
  const auto mask = observed_mask(surface.points, data.frames, 0.1);
  std::size_t seen = 0;
  for (std::uint8_t m : mask) {
    seen += m;
  }
  CHECK(seen > surface.points.size() / 4);
  const std::vector<Vec3> hidden = {Vec3(0.65, 0.65, 0.3)};
  CHECK(observed_mask(hidden, data.frames, 0.1)[0] == 0);
}

TEST_CASE("label transfer takes the nearest source label") {
  const std::vector<Vec3> source = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0)};
  const std::vector<int> labels = {4, 5, 6};
  const std::vector<Vec3> targets = {Vec3(0.1, 0, 0), Vec3(0.9, 0.2, 0), Vec3(0, 1.6, 0.1)};
  CHECK(transfer_labels(targets, source, labels) == std::vector<int>{4, 5, 6});
  CHECK_THROWS_AS(transfer_labels(targets, source, std::vector<int>{1}), DomainError);
  CHECK_THROWS_AS(transfer_labels(targets, std::vector<Vec3>{}, std::vector<int>{}),
                  DomainError);
}
