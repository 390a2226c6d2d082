#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "pointssm/common.hpp"
#include "pointssm/report.hpp"

using namespace pointssm;

TEST_CASE("svg plots are deterministic and carry the expected structure") {
  std::vector<PlotSeries> series = {
      {"train loss", {1.0, 0.6, 0.4, 0.35}},
      {"test loss", {1.1, 0.8, 0.55, 0.5}},
  };
  std::string svg = line_plot_svg(series, "reconstruction loss", "chamfer");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("reconstruction loss") != std::string::npos);
  CHECK(svg.find("train loss") != std::string::npos);
  CHECK(svg.find("test loss") != std::string::npos);
  CHECK(svg.find("chamfer") != std::string::npos);
  // one polyline per series, epochs labeled 1..4
  size_t count = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++count;
    pos += 1;
  }
  CHECK(count == 2);
  CHECK(svg.find(">4</text>") != std::string::npos);
  CHECK(svg == line_plot_svg(series, "reconstruction loss", "chamfer"));
}

TEST_CASE("svg edge cases: flat data plots, empty or non-finite data throws") {
  std::string flat = line_plot_svg({{"flat", {2.0, 2.0, 2.0}}}, "t", "y");
  CHECK(flat.find("polyline") != std::string::npos);
  CHECK_THROWS_AS((void)line_plot_svg({}, "t", "y"), ConfigError);
  CHECK_THROWS_AS((void)line_plot_svg({{"s", {}}}, "t", "y"), ConfigError);
  CHECK_THROWS_AS(
      (void)line_plot_svg({{"s", {1.0, std::nan("")}}}, "t", "y"),
      ConfigError);
}

TEST_CASE("the manifest ties build, config hash, and seeds together") {
  RunConfig cfg;
  cfg.train.seed = 7;
  std::map<std::string, uint64_t> seeds = {{"master", 7}, {"data", 3}};
  std::string manifest = reproducibility_manifest(cfg, seeds);
  CHECK(manifest.rfind("pointssm run manifest\n", 0) == 0);
  CHECK(manifest.find("build_id = ") != std::string::npos);
  CHECK(manifest.find("config_hash = " + config_hash(cfg)) != std::string::npos);
  CHECK(manifest.find("seed.master = 7\n") != std::string::npos);
  CHECK(manifest.find("seed.data = 3\n") != std::string::npos);
  CHECK(manifest.find("train.seed = 7\n") != std::string::npos);
}

TEST_CASE("text file helpers round-trip and surface io errors") {
  std::string path = "report_roundtrip.txt";
  write_text_file(path, "alpha\nbeta\n");
  CHECK(read_text_file(path) == "alpha\nbeta\n");
  CHECK_THROWS_AS((void)read_text_file("/no/such/file"), DataError);
  CHECK_THROWS_AS(write_text_file("/no/such/dir/file", "x"), DataError);
  std::remove(path.c_str());
}
