#include "pointssm/curves.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pointssm/rng.hpp"

namespace pointssm {

namespace {

constexpr int kMaxBits = 20;

void check_bits(int bits) {
  if (bits < 1 || bits > kMaxBits)
    throw std::invalid_argument("curves: bits must be in [1, 20]");
}

void check_coord(const GridCoord& c, int bits) {
  uint32_t limit = 1u << bits;
  if (c[0] >= limit || c[1] >= limit || c[2] >= limit)
    throw std::invalid_argument("curves: coordinate out of grid range");
}

// Skilling's in-place conversions between axis coordinates and the Hilbert
// "transpose" representation (one bit of the rank per axis word per level).
void axes_to_transpose(uint32_t* x, int bits) {
  uint32_t m = 1u << (bits - 1), p, q, t;
  for (q = m; q > 1; q >>= 1) {  // inverse undo
    p = q - 1;
    for (int i = 0; i < 3; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  for (int i = 1; i < 3; ++i) x[i] ^= x[i - 1];  // Gray encode
  t = 0;
  for (q = m; q > 1; q >>= 1)
    if (x[2] & q) t ^= q - 1;
  for (int i = 0; i < 3; ++i) x[i] ^= t;
}

void transpose_to_axes(uint32_t* x, int bits) {
  uint32_t n = 2u << (bits - 1), p, q, t;
  t = x[2] >> 1;  // Gray decode
  for (int i = 2; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  for (q = 2; q != n; q <<= 1) {  // undo excess work
    p = q - 1;
    for (int i = 2; i >= 0; --i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
}

uint64_t interleave_transpose(const uint32_t* x, int bits) {
  uint64_t out = 0;
  for (int bit = bits - 1; bit >= 0; --bit)
    for (int axis = 0; axis < 3; ++axis)
      out = (out << 1) | ((x[axis] >> bit) & 1u);
  return out;
}

}  // namespace

CurveSpec curve_from_string(const std::string& name) {
  CurveSpec spec;
  if (name == "hilbert") {
    spec.kind = CurveKind::hilbert;
  } else if (name == "trans-hilbert") {
    spec.kind = CurveKind::trans_hilbert;
  } else if (name == "zorder") {
    spec.kind = CurveKind::zorder;
  } else if (name == "trans-zorder") {
    spec.kind = CurveKind::trans_zorder;
  } else if (name == "random" || name.rfind("random:", 0) == 0) {
    spec.kind = CurveKind::random_order;
    if (name.size() > 7) {
      try {
        spec.seed = std::stoull(name.substr(7));
      } catch (const std::exception&) {
        throw std::invalid_argument("curves: bad random seed in '" + name + "'");
      }
    }
  } else {
    throw std::invalid_argument(
        "curves: unknown curve '" + name +
        "' (expected hilbert, trans-hilbert, zorder, trans-zorder, random[:seed])");
  }
  return spec;
}

std::string curve_to_string(const CurveSpec& spec) {
  switch (spec.kind) {
    case CurveKind::hilbert: return "hilbert";
    case CurveKind::trans_hilbert: return "trans-hilbert";
    case CurveKind::zorder: return "zorder";
    case CurveKind::trans_zorder: return "trans-zorder";
    case CurveKind::random_order: return "random:" + std::to_string(spec.seed);
  }
  return "hilbert";
}

std::vector<GridCoord> quantize_to_grid(const PointCloud& points, int bits) {
  check_bits(bits);
  if (points.empty()) throw std::invalid_argument("quantize_to_grid: empty cloud");
  double lo[3], hi[3];
  for (int a = 0; a < 3; ++a) lo[a] = hi[a] = points[0][size_t(a)];
  for (const Point3& p : points)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[size_t(a)]);
      hi[a] = std::max(hi[a], p[size_t(a)]);
    }
  double top = double((1u << bits) - 1);
  std::vector<GridCoord> out(points.size());
  for (size_t i = 0; i < points.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      double extent = hi[a] - lo[a];
      if (extent <= 0) {
        out[i][size_t(a)] = 0;
        continue;
      }
      double scaled = (points[i][size_t(a)] - lo[a]) / extent * top;
      double rounded = std::floor(scaled + 0.5);  // round half up
      rounded = std::max(0.0, std::min(top, rounded));
      out[i][size_t(a)] = uint32_t(rounded);
    }
  return out;
}

uint64_t hilbert_index(const GridCoord& coord, int bits) {
  check_bits(bits);
  check_coord(coord, bits);
  uint32_t x[3] = {coord[0], coord[1], coord[2]};
  axes_to_transpose(x, bits);
  return interleave_transpose(x, bits);
}

GridCoord hilbert_point(uint64_t index, int bits) {
  check_bits(bits);
  if (index >= (uint64_t(1) << (3 * bits)))
    throw std::invalid_argument("hilbert_point: index out of range");
  uint32_t x[3] = {0, 0, 0};
  for (int bit = bits - 1; bit >= 0; --bit)
    for (int axis = 0; axis < 3; ++axis) {
      int shift = 3 * bit + (2 - axis);
      x[axis] |= uint32_t((index >> shift) & 1u) << bit;
    }
  transpose_to_axes(x, bits);
  return {x[0], x[1], x[2]};
}

uint64_t z_index(const GridCoord& coord, int bits) {
  check_bits(bits);
  check_coord(coord, bits);
  uint64_t out = 0;
  for (int bit = bits - 1; bit >= 0; --bit) {
    out = (out << 1) | ((coord[0] >> bit) & 1u);
    out = (out << 1) | ((coord[1] >> bit) & 1u);
    out = (out << 1) | ((coord[2] >> bit) & 1u);
  }
  return out;
}

GridCoord transpose_axes(const GridCoord& coord) {
  return {coord[2], coord[0], coord[1]};
}

SerializedOrder serialize(const PointCloud& key_points, const CurveSpec& curve,
                          int bits) {
  check_bits(bits);
  if (key_points.empty()) throw std::invalid_argument("serialize: empty input");
  int64_t n = int64_t(key_points.size());
  SerializedOrder result;
  result.curve = curve;
  result.grid_bits = bits;
  result.order.resize(size_t(n));
  result.keys.assign(size_t(n), 0);
  std::iota(result.order.begin(), result.order.end(), 0);

  if (curve.kind == CurveKind::random_order) {
    Rng rng(curve.seed);
    rng.shuffle(result.order);
    for (int64_t rank = 0; rank < n; ++rank)
      result.keys[size_t(result.order[size_t(rank)])] = uint64_t(rank);
    return result;
  }

  std::vector<GridCoord> grid = quantize_to_grid(key_points, bits);
  bool transposed = curve.kind == CurveKind::trans_hilbert ||
                    curve.kind == CurveKind::trans_zorder;
  bool hilbert = curve.kind == CurveKind::hilbert ||
                 curve.kind == CurveKind::trans_hilbert;
  for (int64_t i = 0; i < n; ++i) {
    GridCoord c = transposed ? transpose_axes(grid[size_t(i)]) : grid[size_t(i)];
    result.keys[size_t(i)] = hilbert ? hilbert_index(c, bits) : z_index(c, bits);
  }
  std::stable_sort(result.order.begin(), result.order.end(),
                   [&](int64_t a, int64_t b) {
                     return result.keys[size_t(a)] < result.keys[size_t(b)];
                   });  // stable: equal keys stay in index order
  return result;
}

double locality_score(const SerializedOrder& order, const PointCloud& points) {
  int64_t n = int64_t(points.size());
  if (n < 2) throw std::invalid_argument("locality_score: need at least 2 points");
  if (int64_t(order.order.size()) != n)
    throw std::invalid_argument("locality_score: order/point count mismatch");
  double total = 0;
  for (int64_t i = 0; i + 1 < n; ++i)
    total += std::sqrt(squared_distance(points[size_t(order.order[size_t(i)])],
                                        points[size_t(order.order[size_t(i + 1)])]));
  return total / double(n - 1);
}

}  // namespace pointssm
