#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "restune/csv.hpp"

namespace restune {

struct PlotSeries {
  std::string name;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string svg_tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace detail

// Standalone SVG polyline chart. A single sample degenerates to a dot.
inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::string& x_label, const std::string& y_label,
                            const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::runtime_error("plot: no series to draw");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  std::size_t total = 0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::runtime_error("plot: series size mismatch");
    total += s.x.size();
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (total == 0) throw std::runtime_error("plot: empty log");
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) {
    ymax = ymin + 1.0;
    ymin -= 1.0;
  }

  const double width = 900, height = 420;
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double v) { return mt + ph - (v - ymin) / (ymax - ymin) * ph; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("plot: cannot open " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
      << height << "' viewBox='0 0 " << width << " " << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16' "
      << "font-family='sans-serif'>" << title << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    out << "<line x1='" << sx(fx) << "' y1='" << mt << "' x2='" << sx(fx) << "' y2='"
        << mt + ph << "' stroke='#dddddd'/>\n";
    out << "<line x1='" << ml << "' y1='" << sy(fy) << "' x2='" << ml + pw << "' y2='"
        << sy(fy) << "' stroke='#dddddd'/>\n";
    out << "<text x='" << sx(fx) << "' y='" << height - mb + 18
        << "' text-anchor='middle' font-size='11' font-family='sans-serif'>"
        << detail::svg_tick_label(fx) << "</text>\n";
    out << "<text x='" << ml - 8 << "' y='" << sy(fy) + 4
        << "' text-anchor='end' font-size='11' font-family='sans-serif'>"
        << detail::svg_tick_label(fy) << "</text>\n";
  }
  out << "<rect x='" << ml << "' y='" << mt << "' width='" << pw << "' height='" << ph
      << "' fill='none' stroke='black'/>\n";
  out << "<text x='" << ml + pw / 2 << "' y='" << height - 10
      << "' text-anchor='middle' font-size='13' font-family='sans-serif'>" << x_label
      << "</text>\n";
  out << "<text x='16' y='" << mt + ph / 2
      << "' text-anchor='middle' font-size='13' font-family='sans-serif' "
      << "transform='rotate(-90 16 " << mt + ph / 2 << ")'>" << y_label << "</text>\n";

  double legend_y = mt + 14;
  for (const auto& s : series) {
    if (s.x.size() == 1) {
      out << "<circle cx='" << sx(s.x[0]) << "' cy='" << sy(s.y[0]) << "' r='3' fill='"
          << s.color << "'/>\n";
    } else {
      out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.2' points='";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
      }
      out << "'/>\n";
    }
    if (series.size() > 1) {
      out << "<line x1='" << ml + pw - 120 << "' y1='" << legend_y << "' x2='"
          << ml + pw - 96 << "' y2='" << legend_y << "' stroke='" << s.color
          << "' stroke-width='2'/>\n";
      out << "<text x='" << ml + pw - 90 << "' y='" << legend_y + 4
          << "' font-size='11' font-family='sans-serif'>" << s.name << "</text>\n";
      legend_y += 16;
    }
  }
  out << "</svg>\n";
}

struct PlotOptions {
  int max_rows = 2000;
};

// Emits H2-vs-time and per-channel error plots plus a downsampled CSV for
// every stage of a run directory. Returns the number of stages plotted.
inline int plot_run(const std::filesystem::path& run_dir, const PlotOptions& opt = {}) {
  namespace fs = std::filesystem;
  if (!fs::exists(run_dir / "manifest.json")) {
    throw std::runtime_error("missing artifact: " + (run_dir / "manifest.json").string());
  }
  const fs::path plots = run_dir / "plots";
  fs::create_directories(plots);

  std::vector<fs::path> stage_dirs;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (entry.is_directory() && entry.path().filename().string().starts_with("stage_")) {
      stage_dirs.push_back(entry.path());
    }
  }
  std::sort(stage_dirs.begin(), stage_dirs.end());

  int plotted = 0;
  for (const auto& dir : stage_dirs) {
    const fs::path metrics = dir / "metrics.csv";
    if (!fs::exists(metrics)) continue;
    const CsvTable table = read_csv(metrics.string());
    if (table.rows.empty()) {
      throw std::runtime_error("empty metric log: " + metrics.string());
    }
    const int tc = table.column("t"), hc = table.column("h2");
    const int ex = table.column("err_x"), ey = table.column("err_y"),
              ez = table.column("err_theta_or_z");
    if (tc < 0 || hc < 0 || ex < 0 || ey < 0 || ez < 0) {
      throw std::runtime_error("metrics.csv misses expected columns: " + metrics.string());
    }

    const std::size_t n = table.rows.size();
    const std::size_t stride =
        std::max<std::size_t>(1, (n + static_cast<std::size_t>(opt.max_rows) - 1) /
                                     static_cast<std::size_t>(opt.max_rows));
    std::vector<double> t, h2, e1, e2, e3;
    for (std::size_t i = 0; i < n; i += stride) {
      const auto& row = table.rows[i];
      t.push_back(parse_double(row[static_cast<std::size_t>(tc)], "t"));
      h2.push_back(parse_double(row[static_cast<std::size_t>(hc)], "h2"));
      e1.push_back(parse_double(row[static_cast<std::size_t>(ex)], "err_x"));
      e2.push_back(parse_double(row[static_cast<std::size_t>(ey)], "err_y"));
      e3.push_back(parse_double(row[static_cast<std::size_t>(ez)], "err_theta_or_z"));
    }

    const std::string stem = dir.filename().string();
    write_svg_chart((plots / (stem + "_h2.svg")).string(), stem + " H2", "t [s]", "H2",
                    {PlotSeries{"h2", "#1f77b4", t, h2}});
    write_svg_chart((plots / (stem + "_channels.svg")).string(), stem + " channel errors",
                    "t [s]", "error",
                    {PlotSeries{"err_x", "#d62728", t, e1},
                     PlotSeries{"err_y", "#2ca02c", t, e2},
                     PlotSeries{"err_theta_or_z", "#9467bd", t, e3}});

    CsvWriter w((plots / (stem + "_downsampled.csv")).string());
    w.header({"t", "h2", "err_x", "err_y", "err_theta_or_z"});
    for (std::size_t i = 0; i < t.size(); ++i) {
      w.row_strings({fmt_double(t[i]), fmt_double(h2[i]), fmt_double(e1[i]),
                     fmt_double(e2[i]), fmt_double(e3[i])});
    }
    ++plotted;
  }
  if (plotted == 0) {
    throw std::runtime_error("no stage metrics found under " + run_dir.string());
  }
  return plotted;
}

}  // namespace restune
