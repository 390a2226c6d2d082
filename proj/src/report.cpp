#include "pointssm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pointssm/build_info.hpp"
#include "pointssm/common.hpp"

namespace pointssm {

namespace {

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};

}  // namespace

std::string line_plot_svg(const std::vector<PlotSeries>& series,
                          const std::string& title,
                          const std::string& y_label) {
  size_t longest = 0;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const PlotSeries& s : series) {
    longest = std::max(longest, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) throw ConfigError("line_plot_svg: non-finite value");
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  }
  if (!any) throw ConfigError("line_plot_svg: no data to plot");
  if (hi == lo) {  // flat series still gets a visible band
    hi += 0.5;
    lo -= 0.5;
  }

  const double width = 640, height = 400;
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const double x_max = double(std::max<size_t>(longest, 2));
  auto x_of = [&](size_t epoch1) {
    return left + plot_w * (double(epoch1) - 1.0) / (x_max - 1.0);
  };
  auto y_of = [&](double v) {
    return top + plot_h * (1.0 - (v - lo) / (hi - lo));
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
  // axes
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
      << left + plot_w << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  // y ticks at min, mid, max
  for (double v : {lo, 0.5 * (lo + hi), hi}) {
    double y = y_of(v);
    svg << "<line x1=\"" << left - 4 << "\" y1=\"" << fmt(y) << "\" x2=\""
        << left << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << fmt(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(v, "%.4g") << "</text>\n";
  }
  // x ticks at first and last epoch
  for (size_t e : {size_t(1), std::max<size_t>(longest, 1)}) {
    double x = x_of(e);
    svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << top + plot_h << "\" x2=\""
        << fmt(x) << "\" y2=\"" << top + plot_h + 4
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fmt(x) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << e << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">epoch</text>\n";
  svg << "<text x=\"16\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 "
      << top + plot_h / 2 << ")\">" << y_label << "</text>\n";

  size_t color = 0;
  double legend_y = top + 8;
  for (const PlotSeries& s : series) {
    if (s.values.empty()) continue;
    const char* stroke = kPalette[color % (sizeof kPalette / sizeof *kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << stroke
        << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.values.size(); ++i) {
      if (i) svg << ' ';
      svg << fmt(x_of(i + 1)) << ',' << fmt(y_of(s.values[i]));
    }
    svg << "\"/>\n";
    svg << "<rect x=\"" << left + plot_w - 150 << "\" y=\"" << legend_y - 8
        << "\" width=\"12\" height=\"3\" fill=\"" << stroke << "\"/>\n";
    svg << "<text x=\"" << left + plot_w - 132 << "\" y=\"" << legend_y - 2
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
        << "</text>\n";
    legend_y += 16;
    ++color;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string reproducibility_manifest(
    const RunConfig& cfg, const std::map<std::string, uint64_t>& seeds) {
  std::ostringstream out;
  out << "pointssm run manifest\n";
  out << "build_id = " << kBuildId << "\n";
  out << "config_hash = " << config_hash(cfg) << "\n";
  for (const auto& [name, value] : seeds)
    out << "seed." << name << " = " << value << "\n";
  out << "\n" << echo_config(cfg);
  return out.str();
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << contents;
  if (!out) throw DataError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

}  // namespace pointssm
