#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"
#include "pointssm/common.hpp"
#include "pointssm/data.hpp"

using namespace pointssm;

TEST_CASE("shape names round trip") {
  for (const char* name : {"sphere", "cube", "torus", "cylinder"})
    CHECK(shape_to_string(shape_from_string(name)) == name);
  CHECK_THROWS_AS((void)shape_from_string("cone"), std::invalid_argument);
}

TEST_CASE("noise-free spheres sit on the unit sphere") {
  PointCloud cloud = generate_shape(ShapeKind::sphere, 500, 0.0, 11);
  REQUIRE(cloud.size() == 500);
  for (const Point3& p : cloud) {
    double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    CHECK(std::fabs(norm - 1.0) <= 1e-12);
  }
}

TEST_CASE("noise-free cubes sit on the unit cube surface") {
  PointCloud cloud = generate_shape(ShapeKind::cube, 500, 0.0, 12);
  for (const Point3& p : cloud) {
    double m = std::max({std::fabs(p[0]), std::fabs(p[1]), std::fabs(p[2])});
    CHECK(std::fabs(m - 0.5) <= 1e-12);
  }
}

TEST_CASE("noise-free torus satisfies its implicit equation") {
  PointCloud cloud = generate_shape(ShapeKind::torus, 500, 0.0, 13);
  for (const Point3& p : cloud) {
    double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]) - 1.0;
    CHECK(std::fabs(ring * ring + p[2] * p[2] - 0.09) <= 1e-10);
  }
}

TEST_CASE("noise-free cylinder points lie on wall or caps") {
  PointCloud cloud = generate_shape(ShapeKind::cylinder, 500, 0.0, 14);
  int64_t caps = 0;
  for (const Point3& p : cloud) {
    double r2 = p[0] * p[0] + p[1] * p[1];
    if (std::fabs(std::fabs(p[2]) - 0.5) <= 1e-12) {
      ++caps;
      CHECK(r2 <= 0.25 + 1e-12);
    } else {
      CHECK(std::fabs(r2 - 0.25) <= 1e-12);
      CHECK(std::fabs(p[2]) <= 0.5 + 1e-12);
    }
  }
  CHECK(caps > 0);          // both regions get sampled
  CHECK(caps < 500);
}

TEST_CASE("generation is reproducible per seed and responds to noise") {
  PointCloud a = generate_shape(ShapeKind::torus, 64, 0.05, 77);
  PointCloud b = generate_shape(ShapeKind::torus, 64, 0.05, 77);
  PointCloud c = generate_shape(ShapeKind::torus, 64, 0.05, 78);
  CHECK(a == b);
  CHECK(a != c);
  bool off_surface = false;
  for (const Point3& p : a) {
    double ring = std::sqrt(p[0] * p[0] + p[1] * p[1]) - 1.0;
    if (std::fabs(ring * ring + p[2] * p[2] - 0.09) > 1e-6) off_surface = true;
  }
  CHECK(off_surface);
  CHECK_THROWS_AS((void)generate_shape(ShapeKind::cube, 0, 0.0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)generate_shape(ShapeKind::cube, 5, -0.1, 1),
                  std::invalid_argument);
}

TEST_CASE("OFF parsing: plain, fused header, headerless, faces ignored") {
  PointCloud one = parse_off("OFF\n1 0 0\n0 0 0\n");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Point3{0, 0, 0});

  PointCloud fused = parse_off("OFF3 0 0\n1 2 3\n4 5 6\n7 8 9\n");
  REQUIRE(fused.size() == 3);
  CHECK(fused[2] == Point3{7, 8, 9});

  PointCloud bare = parse_off("2 0 0\n0.5 0 0\n0 0.5 0\n");
  REQUIRE(bare.size() == 2);

  PointCloud with_faces = parse_off("OFF\n2 1 0\n1 0 0\n0 1 0\n3 0 1 0\n");
  REQUIRE(with_faces.size() == 2);

  PointCloud crlf = parse_off("OFF\r\n1 0 0\r\n0.25 -1 2\r\n");
  REQUIRE(crlf.size() == 1);
  CHECK(crlf[0] == Point3{0.25, -1, 2});
}

TEST_CASE("OFF parsing errors carry 1-based line numbers") {
  try {
    (void)parse_off("2 0 0\n0 0 0\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    (void)parse_off("OFF\n1 0 0\n0 zero 0\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("unparsable") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS((void)parse_off(""), DataError);
  CHECK_THROWS_AS((void)parse_off("OFF\n"), DataError);
}

TEST_CASE("XYZ parsing skips comments and ignores extra columns") {
  PointCloud two = parse_xyz("0 0 0\n1 1 1\n");
  REQUIRE(two.size() == 2);
  CHECK(two[1] == Point3{1, 1, 1});

  PointCloud colored = parse_xyz("# header\n0.5 0.5 0.5 255 0 0\n");
  REQUIRE(colored.size() == 1);
  CHECK(colored[0] == Point3{0.5, 0.5, 0.5});

  try {
    (void)parse_xyz("1 2\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("PLY writer round-trips through the PLY reader") {
  PointCloud cloud = generate_shape(ShapeKind::sphere, 32, 0.1, 5);
  std::string text = to_ply(cloud);
  PointCloud back = parse_ply(text);
  REQUIRE(back.size() == cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) CHECK(back[i] == cloud[i]);

  CHECK_THROWS_AS((void)parse_ply("solid nope\n"), DataError);
  CHECK_THROWS_AS((void)parse_ply("ply\nformat ascii 1.0\nend_header\n"),
                  DataError);
  // vertex rows may carry extra columns; x/y/z picked by name
  PointCloud shuffled = parse_ply(
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float z\n"
      "property float x\nproperty float y\nend_header\n3 1 2\n");
  REQUIRE(shuffled.size() == 1);
  CHECK(shuffled[0] == Point3{1, 2, 3});
}

TEST_CASE("scale-translate: deterministic, bounded, similarity-preserving") {
  PointCloud cloud = generate_shape(ShapeKind::cube, 40, 0.0, 21);
  CHECK(augment_scale_translate(cloud, 9) == augment_scale_translate(cloud, 9));

  double lo = 10, hi = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    PointCloud out = augment_scale_translate(cloud, seed);
    // recover the isotropic scale from one pairwise distance
    double base = std::sqrt(squared_distance(cloud[0], cloud[1]));
    double now = std::sqrt(squared_distance(out[0], out[1]));
    double s = now / base;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    CHECK(s >= 2.0 / 3.0 - 1e-9);
    CHECK(s <= 1.5 + 1e-9);
  }
  CHECK(lo < 0.75);  // the range actually gets explored
  CHECK(hi > 1.4);

  PointCloud out = augment_scale_translate(cloud, 33);
  double r_base = std::sqrt(squared_distance(cloud[2], cloud[3]) /
                            squared_distance(cloud[4], cloud[5]));
  double r_out = std::sqrt(squared_distance(out[2], out[3]) /
                           squared_distance(out[4], out[5]));
  CHECK(std::fabs(r_base - r_out) <= 1e-12);
}

TEST_CASE("rotation: z-axis isometry") {
  PointCloud cloud = generate_shape(ShapeKind::torus, 40, 0.0, 22);
  PointCloud out = augment_rotate(cloud, 4);
  CHECK(out == augment_rotate(cloud, 4));
  for (size_t i = 0; i < cloud.size(); ++i) CHECK(out[i][2] == cloud[i][2]);
  for (size_t i = 0; i + 1 < cloud.size(); i += 2) {
    double before = std::sqrt(squared_distance(cloud[i], cloud[i + 1]));
    double after = std::sqrt(squared_distance(out[i], out[i + 1]));
    CHECK(std::fabs(before - after) <= 1e-12);
  }
  CHECK(out != cloud);  // angle 0 has measure zero at this seed
}

TEST_CASE("synthetic dataset is balanced, labeled, and split-disjoint") {
  Dataset train = make_synthetic_dataset(3, 64, 0.02, 100, "train");
  Dataset test = make_synthetic_dataset(3, 64, 0.02, 100, "test");
  REQUIRE(train.samples.size() == 12);
  REQUIRE(train.class_names.size() == 4);
  std::vector<int64_t> counts(4, 0);
  for (const Sample& s : train.samples) {
    REQUIRE(s.label >= 0);
    REQUIRE(s.label < 4);
    ++counts[size_t(s.label)];
    CHECK(s.cloud.size() == 64);
  }
  for (int64_t c : counts) CHECK(c == 3);

  Dataset again = make_synthetic_dataset(3, 64, 0.02, 100, "train");
  for (size_t i = 0; i < train.samples.size(); ++i)
    CHECK(train.samples[i].cloud == again.samples[i].cloud);
  CHECK(train.samples[0].cloud != test.samples[0].cloud);
}
