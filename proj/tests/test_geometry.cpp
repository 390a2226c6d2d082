#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "pointssm/geometry.hpp"
#include "pointssm/ops.hpp"
#include "pointssm/rng.hpp"

using namespace pointssm;

namespace {

PointCloud random_cloud(int64_t m, uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  PointCloud cloud(static_cast<size_t>(m));
  for (auto& p : cloud)
    for (int a = 0; a < 3; ++a) p[size_t(a)] = rng.uniform(lo, hi);
  return cloud;
}

// Independent greedy oracle: recomputes every min-distance from scratch each
// round instead of maintaining a running minimum.
std::vector<int64_t> fps_oracle(const PointCloud& cloud, int64_t n, int64_t start) {
  std::vector<int64_t> picked{start};
  while (int64_t(picked.size()) < n) {
    int64_t best_idx = -1;
    double best_score = -1;
    for (int64_t i = 0; i < int64_t(cloud.size()); ++i) {
      double closest = std::numeric_limits<double>::infinity();
      for (int64_t j : picked)
        closest = std::min(closest, squared_distance(cloud[size_t(i)], cloud[size_t(j)]));
      if (closest > best_score) {
        best_score = closest;
        best_idx = i;
      }
    }
    picked.push_back(best_idx);
  }
  return picked;
}

}  // namespace

TEST_CASE("fps collinear frozen example") {
  PointCloud line;
  for (int i = 0; i < 10; ++i) line.push_back({double(i), 0, 0});
  auto picked = farthest_point_sampling(line, 3, 0);
  REQUIRE(picked.size() == 3);
  CHECK(picked[0] == 0);
  CHECK(picked[1] == 9);
  CHECK(picked[2] == 4);  // 4 and 5 tie at min-distance 16; lower index wins
}

TEST_CASE("fps with n equal to cloud size is a permutation") {
  PointCloud cloud = random_cloud(17, 3);
  auto picked = farthest_point_sampling(cloud, 17, 5);
  std::vector<int64_t> sorted = picked;
  std::sort(sorted.begin(), sorted.end());
  for (int64_t i = 0; i < 17; ++i) CHECK(sorted[size_t(i)] == i);
  CHECK(picked[0] == 5);
}

TEST_CASE("fps matches brute-force oracle on random clouds") {
  for (uint64_t seed : {11u, 22u, 33u, 44u}) {
    PointCloud cloud = random_cloud(64, seed);
    auto fast = farthest_point_sampling(cloud, 8, 0);
    auto slow = fps_oracle(cloud, 8, 0);
    CHECK(fast == slow);
  }
  // larger instance, off-zero start
  PointCloud big = random_cloud(512, 99);
  CHECK(farthest_point_sampling(big, 64, 17) == fps_oracle(big, 64, 17));
}

TEST_CASE("fps translation invariance") {
  PointCloud cloud = random_cloud(50, 7);
  PointCloud moved = cloud;
  for (auto& p : moved) {
    p[0] += 10;
    p[1] -= 3;
    p[2] += 0.5;
  }
  CHECK(farthest_point_sampling(cloud, 12, 0) ==
        farthest_point_sampling(moved, 12, 0));
}

TEST_CASE("fps input validation") {
  PointCloud cloud = random_cloud(4, 1);
  CHECK_THROWS_AS((void)farthest_point_sampling(cloud, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)farthest_point_sampling(cloud, 2, 4), std::invalid_argument);
  CHECK_THROWS_AS((void)farthest_point_sampling({}, 1, 0), std::invalid_argument);
}

TEST_CASE("knn basics and frozen examples") {
  PointCloud line;
  for (int i = 0; i < 4; ++i) line.push_back({double(i), 0, 0});
  auto two = knn(line, {1.4, 0, 0}, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == 1);
  CHECK(two[1] == 2);

  // query equal to a cloud point ranks that point first
  auto self = knn(line, {2.0, 0, 0}, 1);
  CHECK(self[0] == 2);

  CHECK_THROWS_AS((void)knn(line, {0, 0, 0}, 5), std::invalid_argument);
}

TEST_CASE("knn tie break prefers smaller index") {
  PointCloud cloud{{1, 0, 0}, {-1, 0, 0}, {0, 2, 0}};
  auto got = knn(cloud, {0, 0, 0}, 2);
  CHECK(got[0] == 0);
  CHECK(got[1] == 1);
}

TEST_CASE("knn matches full-sort oracle") {
  PointCloud cloud = random_cloud(256, 5);
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Point3 q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<std::pair<double, int64_t>> all;
    for (int64_t i = 0; i < 256; ++i)
      all.emplace_back(squared_distance(cloud[size_t(i)], q), i);
    std::sort(all.begin(), all.end());
    auto got = knn(cloud, q, 32);
    for (int64_t i = 0; i < 32; ++i) CHECK(got[size_t(i)] == all[size_t(i)].second);
  }
}

TEST_CASE("patches are translation invariant and self-centered") {
  PointCloud cloud = random_cloud(40, 9);
  auto keys = farthest_point_sampling(cloud, 6, 0);
  auto patches = make_patches(cloud, keys, 5);
  REQUIRE(patches.size() == 6);
  for (const auto& patch : patches) {
    // the key point is its own nearest neighbor: first relative point is 0
    CHECK(patch.member_indices[0] == patch.key_index);
    CHECK(patch.relative_points[0][0] == 0.0);
    CHECK(patch.relative_points[0][1] == 0.0);
    CHECK(patch.relative_points[0][2] == 0.0);
  }

  PointCloud moved = cloud;
  for (auto& p : moved) {
    p[0] -= 4;
    p[2] += 2.5;
  }
  auto moved_patches = make_patches(moved, keys, 5);
  for (size_t i = 0; i < patches.size(); ++i)
    for (size_t j = 0; j < 5; ++j)
      for (int a = 0; a < 3; ++a)
        CHECK(patches[i].relative_points[j][size_t(a)] ==
              doctest::Approx(moved_patches[i].relative_points[j][size_t(a)])
                  .epsilon(1e-12));
}

TEST_CASE("isolated key with k=1 gives the zero patch") {
  PointCloud cloud{{5, 5, 5}, {100, 100, 100}};
  auto patches = make_patches(cloud, {1}, 1);
  REQUIRE(patches.size() == 1);
  CHECK(patches[0].relative_points[0] == Point3{0, 0, 0});
}

TEST_CASE("chamfer distance frozen and oracle") {
  CHECK(chamfer_distance({{0, 0, 0}}, {{1, 0, 0}}) == 2.0);
  PointCloud s = random_cloud(10, 14);
  CHECK(chamfer_distance(s, s) == 0.0);
  CHECK_THROWS_AS((void)chamfer_distance({}, s), std::invalid_argument);

  PointCloud a = random_cloud(32, 15);
  PointCloud b = random_cloud(32, 16);
  // symmetric
  CHECK(chamfer_distance(a, b) == doctest::Approx(chamfer_distance(b, a)).epsilon(1e-15));
  // double-loop oracle, written out once more by hand
  double t1 = 0, t2 = 0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, squared_distance(p, q));
    t1 += best;
  }
  for (const auto& q : b) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : a) best = std::min(best, squared_distance(p, q));
    t2 += best;
  }
  double oracle = t1 / 32.0 + t2 / 32.0;
  CHECK(std::fabs(chamfer_distance(a, b) - oracle) <= 1e-12);

  // the differentiable loss op computes the same value
  Tensor pred = Tensor::empty({32, 3});
  for (int64_t i = 0; i < 32; ++i)
    for (int64_t d = 0; d < 3; ++d) pred.data()[i * 3 + d] = a[size_t(i)][size_t(d)];
  std::vector<std::array<double, 3>> target(b.begin(), b.end());
  CHECK(std::fabs(chamfer_to_fixed(pred, target).item() - oracle) <= 1e-12);
}
