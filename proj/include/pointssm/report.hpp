#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pointssm/config.hpp"

// Static artifact writers: an SVG line plot for metric curves and a plain
// text reproducibility manifest. No interactive output anywhere.
namespace pointssm {

// One named series of per-epoch values.
struct PlotSeries {
  std::string label;
  std::vector<double> values;  // x is 1-based epoch index
};

// Deterministic standalone SVG: axes, ticks, one polyline per series, and a
// small legend. Throws ConfigError when no series has data.
std::string line_plot_svg(const std::vector<PlotSeries>& series,
                          const std::string& title,
                          const std::string& y_label);

// Plain-text manifest tying a run to its inputs: build id, config hash, the
// named seeds, and the full canonical config echo.
std::string reproducibility_manifest(
    const RunConfig& cfg, const std::map<std::string, uint64_t>& seeds);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace pointssm
