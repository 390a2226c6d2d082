#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace pointssm {

using Point3 = std::array<double, 3>;
using PointCloud = std::vector<Point3>;

// A local neighborhood: k nearest neighbors of a key point, stored relative
// to the key so patches are translation-invariant.
struct PointPatch {
  int64_t key_index = 0;
  Point3 key_point{0, 0, 0};
  std::vector<int64_t> member_indices;
  std::vector<Point3> relative_points;  // member - key_point
};

// Greedy max-min selection. First pick is start_index; every later pick
// maximizes the minimum distance to the already-selected set, ties broken by
// smallest index. Returns indices in selection order.
std::vector<int64_t> farthest_point_sampling(const PointCloud& cloud, int64_t n,
                                             int64_t start_index = 0);

// Indices of the k points closest to query, ascending by squared distance,
// ties broken by smallest index. A cloud point equal to query ranks first.
std::vector<int64_t> knn(const PointCloud& cloud, const Point3& query,
                         int64_t k);

// One patch per key index, in the given order; neighbors drawn from the full
// cloud.
std::vector<PointPatch> make_patches(const PointCloud& cloud,
                                     const std::vector<int64_t>& key_indices,
                                     int64_t k);

// Squared-L2 Chamfer distance: mean over each set of the squared distance to
// the other set's nearest point, summed over both directions.
double chamfer_distance(const PointCloud& s1, const PointCloud& s2);

double squared_distance(const Point3& a, const Point3& b);

}  // namespace pointssm
