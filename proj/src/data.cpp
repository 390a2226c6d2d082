#include "pointssm/data.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pointssm/common.hpp"
#include "pointssm/rng.hpp"

namespace pointssm {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTorusRing = 1.0;
constexpr double kTorusTube = 0.3;
constexpr double kCylinderRadius = 0.5;
constexpr double kCylinderHeight = 1.0;

Point3 sample_sphere(Rng& rng) {
  // normalized Gaussian direction: uniform on the sphere
  while (true) {
    Point3 p{rng.normal(), rng.normal(), rng.normal()};
    double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (norm > 1e-12)
      return Point3{p[0] / norm, p[1] / norm, p[2] / norm};
  }
}

Point3 sample_cube(Rng& rng) {
  int64_t face = rng.uniform_int(6);
  double u = rng.uniform(-0.5, 0.5), v = rng.uniform(-0.5, 0.5);
  double s = (face % 2 == 0) ? 0.5 : -0.5;
  switch (face / 2) {
    case 0: return Point3{s, u, v};
    case 1: return Point3{u, s, v};
    default: return Point3{u, v, s};
  }
}

Point3 sample_torus(Rng& rng) {
  // rejection on the tube angle keeps the surface density uniform
  while (true) {
    double phi = rng.uniform(0.0, 2.0 * kPi);
    double theta = rng.uniform(0.0, 2.0 * kPi);
    double accept = (kTorusRing + kTorusTube * std::cos(theta)) /
                    (kTorusRing + kTorusTube);
    if (rng.uniform() <= accept) {
      double ring = kTorusRing + kTorusTube * std::cos(theta);
      return Point3{ring * std::cos(phi), ring * std::sin(phi),
                    kTorusTube * std::sin(theta)};
    }
  }
}

Point3 sample_cylinder(Rng& rng) {
  const double lateral = 2.0 * kPi * kCylinderRadius * kCylinderHeight;
  const double cap = kPi * kCylinderRadius * kCylinderRadius;
  double pick = rng.uniform(0.0, lateral + 2.0 * cap);
  double angle = rng.uniform(0.0, 2.0 * kPi);
  if (pick < lateral) {
    double z = rng.uniform(-0.5 * kCylinderHeight, 0.5 * kCylinderHeight);
    return Point3{kCylinderRadius * std::cos(angle),
                  kCylinderRadius * std::sin(angle), z};
  }
  double r = kCylinderRadius * std::sqrt(rng.uniform());
  double z = (pick < lateral + cap) ? 0.5 * kCylinderHeight
                                    : -0.5 * kCylinderHeight;
  return Point3{r * std::cos(angle), r * std::sin(angle), z};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty() && current.back() == '\r') current.pop_back();
  if (!current.empty()) lines.push_back(current);
  return lines;
}

bool blank(const std::string& line) {
  for (char c : line)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

[[noreturn]] void fail(const std::string& what, size_t line_1based) {
  throw DataError(what + " at line " + std::to_string(line_1based));
}

// parses exactly count reals from the front of the line; extra columns ignored
std::vector<double> parse_reals(const std::string& line, size_t min_count,
                                size_t line_no) {
  std::vector<double> vals;
  const char* p = line.c_str();
  while (*p != '\0') {
    while (*p != '\0' && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (*p == '\0' || *p == '#') break;
    char* end = nullptr;
    double v = std::strtod(p, &end);
    if (end == p) fail("unparsable real", line_no);
    vals.push_back(v);
    p = end;
  }
  if (vals.size() < min_count)
    fail("expected at least " + std::to_string(min_count) + " reals, got " +
             std::to_string(vals.size()),
         line_no);
  return vals;
}

}  // namespace

ShapeKind shape_from_string(const std::string& name) {
  if (name == "sphere") return ShapeKind::sphere;
  if (name == "cube") return ShapeKind::cube;
  if (name == "torus") return ShapeKind::torus;
  if (name == "cylinder") return ShapeKind::cylinder;
  throw std::invalid_argument("unknown shape kind: " + name);
}

std::string shape_to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cube: return "cube";
    case ShapeKind::torus: return "torus";
    case ShapeKind::cylinder: return "cylinder";
  }
  throw std::invalid_argument("unknown shape value");
}

PointCloud generate_shape(ShapeKind kind, int64_t n_points, double noise_sigma,
                          uint64_t seed) {
  if (n_points < 1) throw std::invalid_argument("n_points must be >= 1");
  if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");
  Rng rng(seed);
  PointCloud cloud;
  cloud.reserve(static_cast<size_t>(n_points));
  for (int64_t i = 0; i < n_points; ++i) {
    Point3 p;
    switch (kind) {
      case ShapeKind::sphere: p = sample_sphere(rng); break;
      case ShapeKind::cube: p = sample_cube(rng); break;
      case ShapeKind::torus: p = sample_torus(rng); break;
      case ShapeKind::cylinder: p = sample_cylinder(rng); break;
    }
    if (noise_sigma > 0)
      for (double& v : p) v += noise_sigma * rng.normal();
    cloud.push_back(p);
  }
  return cloud;
}

PointCloud parse_off(const std::string& text) {
  std::vector<std::string> lines = split_lines(text);
  size_t i = 0;
  while (i < lines.size() && blank(lines[i])) ++i;
  if (i == lines.size()) throw DataError("empty OFF input");

  std::string counts_line;
  size_t counts_no = 0;
  std::string first = lines[i];
  size_t lead = first.find_first_not_of(" \t");
  std::string trimmed = lead == std::string::npos ? "" : first.substr(lead);
  if (trimmed.rfind("OFF", 0) == 0) {
    std::string rest = trimmed.substr(3);
    if (!blank(rest)) {
      counts_line = rest;  // fused header: "OFF3 0 0"
      counts_no = i + 1;
      ++i;
    } else {
      ++i;
      while (i < lines.size() && blank(lines[i])) ++i;
      if (i == lines.size()) fail("missing OFF counts line", lines.size() + 1);
      counts_line = lines[i];
      counts_no = i + 1;
      ++i;
    }
  } else {
    counts_line = first;  // header omitted entirely
    counts_no = i + 1;
    ++i;
  }

  std::vector<double> counts = parse_reals(counts_line, 3, counts_no);
  if (counts[0] < 0 || counts[0] != std::floor(counts[0]))
    fail("malformed vertex count", counts_no);
  const size_t v = size_t(counts[0]);

  PointCloud cloud;
  cloud.reserve(v);
  while (cloud.size() < v) {
    while (i < lines.size() && blank(lines[i])) ++i;
    if (i == lines.size())
      fail("expected " + std::to_string(v) + " vertices, got " +
               std::to_string(cloud.size()),
           i + 1);
    std::vector<double> p = parse_reals(lines[i], 3, i + 1);
    cloud.push_back(Point3{p[0], p[1], p[2]});
    ++i;
  }
  return cloud;  // faces, if present, are ignored
}

PointCloud parse_xyz(const std::string& text) {
  std::vector<std::string> lines = split_lines(text);
  PointCloud cloud;
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (blank(line)) continue;
    std::vector<double> p = parse_reals(line, 3, i + 1);
    cloud.push_back(Point3{p[0], p[1], p[2]});
  }
  return cloud;
}

PointCloud parse_ply(const std::string& text) {
  std::vector<std::string> lines = split_lines(text);
  if (lines.empty() || blank(lines[0]) || lines[0] != "ply")
    throw DataError("not a PLY file: missing ply magic at line 1");
  size_t i = 1;
  int64_t vertex_count = -1;
  bool ascii = false;
  std::vector<std::string> vertex_props;
  std::string current_element;
  for (; i < lines.size(); ++i) {
    std::istringstream ss(lines[i]);
    std::string word;
    ss >> word;
    if (word == "comment" || word.empty()) continue;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = (fmt == "ascii");
      if (!ascii) fail("only ascii PLY is supported", i + 1);
    } else if (word == "element") {
      std::string name;
      int64_t count = 0;
      ss >> name >> count;
      current_element = name;
      if (name == "vertex") vertex_count = count;
    } else if (word == "property") {
      if (current_element == "vertex") {
        std::string type, prop;
        ss >> type >> prop;
        vertex_props.push_back(prop);
      }
    } else if (word == "end_header") {
      ++i;
      break;
    }
  }
  if (vertex_count < 0) throw DataError("PLY header lacks an element vertex");
  int64_t xi = -1, yi = -1, zi = -1;
  for (size_t p = 0; p < vertex_props.size(); ++p) {
    if (vertex_props[p] == "x") xi = int64_t(p);
    if (vertex_props[p] == "y") yi = int64_t(p);
    if (vertex_props[p] == "z") zi = int64_t(p);
  }
  if (xi < 0 || yi < 0 || zi < 0)
    throw DataError("PLY vertex element lacks x/y/z properties");

  PointCloud cloud;
  cloud.reserve(static_cast<size_t>(vertex_count));
  while (int64_t(cloud.size()) < vertex_count) {
    while (i < lines.size() && blank(lines[i])) ++i;
    if (i == lines.size())
      fail("expected " + std::to_string(vertex_count) + " vertices, got " +
               std::to_string(cloud.size()),
           i + 1);
    std::vector<double> vals =
        parse_reals(lines[i], vertex_props.size(), i + 1);
    cloud.push_back(
        Point3{vals[size_t(xi)], vals[size_t(yi)], vals[size_t(zi)]});
    ++i;
  }
  return cloud;
}

PointCloud load_point_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  size_t dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (char& c : ext) c = char(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "off") return parse_off(text);
  if (ext == "xyz" || ext == "txt") return parse_xyz(text);
  if (ext == "ply") return parse_ply(text);
  throw DataError("unsupported point file extension: " + path);
}

std::string to_ply(const PointCloud& cloud) {
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n"
      << "end_header\n";
  char buf[96];
  for (const Point3& p : cloud) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
  return out.str();
}

PointCloud augment_scale_translate(const PointCloud& cloud, uint64_t seed) {
  Rng rng(seed);
  double s = rng.uniform(2.0 / 3.0, 3.0 / 2.0);
  Point3 t{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
           rng.uniform(-0.2, 0.2)};
  PointCloud out;
  out.reserve(cloud.size());
  for (const Point3& p : cloud)
    out.push_back(Point3{p[0] * s + t[0], p[1] * s + t[1], p[2] * s + t[2]});
  return out;
}

PointCloud augment_rotate(const PointCloud& cloud, uint64_t seed) {
  Rng rng(seed);
  double angle = rng.uniform(0.0, 2.0 * kPi);
  double c = std::cos(angle), s = std::sin(angle);
  PointCloud out;
  out.reserve(cloud.size());
  for (const Point3& p : cloud)
    out.push_back(Point3{c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]});
  return out;
}

Dataset make_synthetic_dataset(int64_t per_class, int64_t points_per_cloud,
                               double noise_sigma, uint64_t seed,
                               const std::string& split) {
  if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
  Dataset ds;
  ds.split = split;
  ds.class_names = {"sphere", "cube", "torus", "cylinder"};
  const ShapeKind kinds[] = {ShapeKind::sphere, ShapeKind::cube,
                             ShapeKind::torus, ShapeKind::cylinder};
  for (int64_t idx = 0; idx < per_class; ++idx) {
    for (int64_t cls = 0; cls < 4; ++cls) {
      uint64_t sample_seed =
          derive_seed(seed, split + ":sample", uint64_t(cls), uint64_t(idx));
      Sample s;
      s.cloud = generate_shape(kinds[cls], points_per_cloud, noise_sigma,
                               sample_seed);
      s.label = cls;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace pointssm
