#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pointssm/geometry.hpp"

namespace pointssm {

enum class CurveKind { hilbert, trans_hilbert, zorder, trans_zorder, random_order };

struct CurveSpec {
  CurveKind kind = CurveKind::hilbert;
  uint64_t seed = 0;  // consumed by random_order only
};

// Accepted names: "hilbert", "trans-hilbert", "zorder", "trans-zorder",
// "random" or "random:<seed>". Throws std::invalid_argument otherwise.
CurveSpec curve_from_string(const std::string& name);
std::string curve_to_string(const CurveSpec& spec);

using GridCoord = std::array<uint32_t, 3>;

// Per-axis min-max normalization to [0, 2^bits - 1], round half up; an axis
// with zero extent maps to 0.
std::vector<GridCoord> quantize_to_grid(const PointCloud& points, int bits);

// 3-D Hilbert curve rank of a grid cell (transpose/Gray-code bit algorithm)
// and its exact inverse.
uint64_t hilbert_index(const GridCoord& coord, int bits);
GridCoord hilbert_point(uint64_t index, int bits);

// Morton code: interleave x,y,z from the most significant bit, x first.
uint64_t z_index(const GridCoord& coord, int bits);

// Cyclic axis permutation (x,y,z) -> (z,x,y), the second "perspective" used
// by the trans- curve variants.
GridCoord transpose_axes(const GridCoord& coord);

struct SerializedOrder {
  std::vector<int64_t> order;  // permutation of 0..n-1, curve-rank ascending
  std::vector<uint64_t> keys;  // per original index: curve code (or final
                               // rank, for the random order)
  CurveSpec curve;
  int grid_bits = 9;
};

// Quantize, apply the axis transpose for trans- variants, rank by curve
// index with ties broken by original index. random_order shuffles indices
// with the spec's seed and ignores geometry.
SerializedOrder serialize(const PointCloud& key_points, const CurveSpec& curve,
                          int bits = 9);

// Mean Euclidean distance between consecutive points of the order.
double locality_score(const SerializedOrder& order, const PointCloud& points);

}  // namespace pointssm
