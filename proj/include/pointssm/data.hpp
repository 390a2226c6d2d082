#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointssm/geometry.hpp"

// Synthetic shape generation, plain-text point-cloud parsing, and the two
// training-time augmentations.
namespace pointssm {

enum class ShapeKind { sphere, cube, torus, cylinder };
ShapeKind shape_from_string(const std::string& name);
std::string shape_to_string(ShapeKind kind);

// Seeded uniform sampling of the shape surface plus isotropic Gaussian
// noise. Unit scale: sphere radius 1; cube side 1; torus ring radius 1,
// tube radius 0.3; cylinder radius 0.5, height 1 (caps included).
PointCloud generate_shape(ShapeKind kind, int64_t n_points, double noise_sigma,
                          uint64_t seed);

// Parsers throw DataError naming the offending 1-based line.
PointCloud parse_off(const std::string& text);
PointCloud parse_xyz(const std::string& text);
PointCloud parse_ply(const std::string& text);
// Dispatch by file extension (.off/.xyz/.ply); reads the whole file.
PointCloud load_point_file(const std::string& path);

// ASCII PLY with x/y/z double-precision properties, %.17g round-trippable.
std::string to_ply(const PointCloud& cloud);

// Uniform scale in [2/3, 3/2] plus per-axis translation in [-0.2, 0.2].
PointCloud augment_scale_translate(const PointCloud& cloud, uint64_t seed);
// Rotation about the gravity (z) axis, angle uniform in [0, 2pi).
PointCloud augment_rotate(const PointCloud& cloud, uint64_t seed);

struct Sample {
  PointCloud cloud;
  int64_t label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  std::string split;  // "train" or "test"
};

// Class-balanced four-way shape classification set; every cloud gets its own
// derived seed so the set is reproducible and split-disjoint.
Dataset make_synthetic_dataset(int64_t per_class, int64_t points_per_cloud,
                               double noise_sigma, uint64_t seed,
                               const std::string& split);

}  // namespace pointssm
