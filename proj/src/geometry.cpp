#include "pointssm/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace pointssm {

double squared_distance(const Point3& a, const Point3& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

std::vector<int64_t> farthest_point_sampling(const PointCloud& cloud, int64_t n,
                                             int64_t start_index) {
  int64_t m = int64_t(cloud.size());
  if (m < 1) throw std::invalid_argument("farthest_point_sampling: empty cloud");
  if (n < 1 || n > m)
    throw std::invalid_argument("farthest_point_sampling: need 1 <= n <= cloud size");
  if (start_index < 0 || start_index >= m)
    throw std::invalid_argument("farthest_point_sampling: start index out of range");
  std::vector<int64_t> picked;
  picked.reserve(size_t(n));
  picked.push_back(start_index);
  std::vector<double> best(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i)
    best[size_t(i)] = squared_distance(cloud[size_t(i)], cloud[size_t(start_index)]);
  while (int64_t(picked.size()) < n) {
    int64_t arg = 0;
    double far = -1.0;
    for (int64_t i = 0; i < m; ++i) {
      if (best[size_t(i)] > far) {  // strict: ties keep the smaller index
        far = best[size_t(i)];
        arg = i;
      }
    }
    picked.push_back(arg);
    for (int64_t i = 0; i < m; ++i)
      best[size_t(i)] = std::min(best[size_t(i)],
                                 squared_distance(cloud[size_t(i)], cloud[size_t(arg)]));
  }
  return picked;
}

std::vector<int64_t> knn(const PointCloud& cloud, const Point3& query,
                         int64_t k) {
  int64_t m = int64_t(cloud.size());
  if (k < 1 || k > m) throw std::invalid_argument("knn: need 1 <= k <= cloud size");
  std::vector<std::pair<double, int64_t>> dist;
  dist.reserve(size_t(m));
  for (int64_t i = 0; i < m; ++i)
    dist.emplace_back(squared_distance(cloud[size_t(i)], query), i);
  std::sort(dist.begin(), dist.end());  // pair order = (distance, index)
  std::vector<int64_t> out;
  out.reserve(size_t(k));
  for (int64_t i = 0; i < k; ++i) out.push_back(dist[size_t(i)].second);
  return out;
}

std::vector<PointPatch> make_patches(const PointCloud& cloud,
                                     const std::vector<int64_t>& key_indices,
                                     int64_t k) {
  int64_t m = int64_t(cloud.size());
  std::vector<PointPatch> patches;
  patches.reserve(key_indices.size());
  for (int64_t key : key_indices) {
    if (key < 0 || key >= m)
      throw std::invalid_argument("make_patches: key index out of range");
    PointPatch patch;
    patch.key_index = key;
    patch.key_point = cloud[size_t(key)];
    patch.member_indices = knn(cloud, patch.key_point, k);
    patch.relative_points.reserve(size_t(k));
    for (int64_t idx : patch.member_indices) {
      const Point3& p = cloud[size_t(idx)];
      patch.relative_points.push_back({p[0] - patch.key_point[0],
                                       p[1] - patch.key_point[1],
                                       p[2] - patch.key_point[2]});
    }
    patches.push_back(std::move(patch));
  }
  return patches;
}

double chamfer_distance(const PointCloud& s1, const PointCloud& s2) {
  if (s1.empty() || s2.empty())
    throw std::invalid_argument("chamfer_distance: empty point set");
  auto one_sided = [](const PointCloud& from, const PointCloud& to) {
    double total = 0;
    for (const Point3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Point3& q : to) best = std::min(best, squared_distance(p, q));
      total += best;
    }
    return total / double(from.size());
  };
  return one_sided(s1, s2) + one_sided(s2, s1);
}

}  // namespace pointssm
