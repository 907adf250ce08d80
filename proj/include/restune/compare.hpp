#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "restune/csv.hpp"

namespace restune {

struct RunStageInfo {
  int index = 0;
  std::string kind;
  std::string tag;
  int records = 0;
  int updates = 0;
  double mean_h2 = 0.0;
  double trailing_mean_h2 = 0.0;
  double convergence_time = std::numeric_limits<double>::quiet_NaN();
};

struct LoadedRun {
  std::filesystem::path dir;
  nlohmann::json manifest;
  std::vector<RunStageInfo> stages;
};

// Earliest time where the moving-average H2 settles at (within 20% of) the
// trailing-tenth mean; NaN when the log never gets there.
inline double convergence_time(const std::vector<double>& t, const std::vector<double>& h2) {
  if (t.empty() || t.size() != h2.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const std::size_t n = h2.size();
  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  double trailing = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) trailing += h2[i];
  trailing /= static_cast<double>(tail);
  const double target = 1.2 * trailing;
  const std::size_t window = std::max<std::size_t>(5, n / 100);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += h2[i];
    if (i >= window) acc -= h2[i - window];
    const std::size_t len = std::min(i + 1, window);
    if (acc / static_cast<double>(len) <= target) return t[i];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline LoadedRun load_run(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  LoadedRun run;
  run.dir = dir;
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw std::runtime_error("missing artifact: " + manifest_path.string());
  }
  std::ifstream in(manifest_path);
  in >> run.manifest;
  if (run.manifest.value("status", "") != "complete") {
    throw std::runtime_error("run is not complete (status='" +
                             run.manifest.value("status", "") + "'): " + dir.string());
  }
  for (const auto& s : run.manifest.at("stages")) {
    RunStageInfo info;
    info.index = s.at("index").get<int>();
    info.kind = s.at("kind").get<std::string>();
    info.tag = s.value("tag", info.kind);
    info.records = s.value("records", 0);
    info.updates = s.value("updates", 0);
    info.mean_h2 = s.value("mean_h2", 0.0);
    info.trailing_mean_h2 = s.value("trailing_mean_h2", 0.0);

    char buf[16];
    std::snprintf(buf, sizeof(buf), "stage_%02d_", info.index);
    const fs::path metrics = dir / (buf + info.kind) / "metrics.csv";
    if (!fs::exists(metrics)) {
      throw std::runtime_error("missing artifact: " + metrics.string());
    }
    const CsvTable table = read_csv(metrics.string());
    const int tc = table.column("t");
    const int hc = table.column("h2");
    if (tc >= 0 && hc >= 0) {
      std::vector<double> ts, h2s;
      ts.reserve(table.rows.size());
      h2s.reserve(table.rows.size());
      for (const auto& row : table.rows) {
        ts.push_back(parse_double(row[static_cast<std::size_t>(tc)], "t"));
        h2s.push_back(parse_double(row[static_cast<std::size_t>(hc)], "h2"));
      }
      info.convergence_time = convergence_time(ts, h2s);
    }
    run.stages.push_back(std::move(info));
  }
  return run;
}

struct CompareRow {
  std::string kind;
  std::optional<RunStageInfo> a;
  std::optional<RunStageInfo> b;
};

struct CompareReport {
  std::filesystem::path dir_a;
  std::filesystem::path dir_b;
  std::vector<CompareRow> rows;

  std::string render_table() const {
    std::ostringstream os;
    os << "comparison: A=" << dir_a.string() << "  B=" << dir_b.string() << "\n";
    os << std::left;
    auto cell = [](double v) -> std::string {
      if (std::isnan(v)) return "-";
      char buf[24];
      std::snprintf(buf, sizeof(buf), "%.6g", v);
      return buf;
    };
    os << "stage                 mean_h2(A)    mean_h2(B)    trail(A)      trail(B)      conv_t(A)   conv_t(B)\n";
    for (const auto& r : rows) {
      char line[256];
      std::snprintf(line, sizeof(line), "%-20s  %-12s  %-12s  %-12s  %-12s  %-10s  %-10s",
                    r.kind.c_str(),
                    r.a ? cell(r.a->mean_h2).c_str() : "-",
                    r.b ? cell(r.b->mean_h2).c_str() : "-",
                    r.a ? cell(r.a->trailing_mean_h2).c_str() : "-",
                    r.b ? cell(r.b->trailing_mean_h2).c_str() : "-",
                    r.a ? cell(r.a->convergence_time).c_str() : "-",
                    r.b ? cell(r.b->convergence_time).c_str() : "-");
      os << line << "\n";
    }
    return os.str();
  }

  void write_csv(const std::string& path) const {
    CsvWriter w(path);
    w.header({"kind", "mean_h2_a", "mean_h2_b", "mean_h2_delta", "trailing_a",
              "trailing_b", "trailing_delta", "convergence_time_a", "convergence_time_b"});
    auto cell = [](double v) { return std::isnan(v) ? std::string("nan") : fmt_double(v); };
    for (const auto& r : rows) {
      const bool both = r.a && r.b;
      w.row_strings({r.kind,
                     r.a ? cell(r.a->mean_h2) : "nan",
                     r.b ? cell(r.b->mean_h2) : "nan",
                     both ? cell(r.b->mean_h2 - r.a->mean_h2) : "nan",
                     r.a ? cell(r.a->trailing_mean_h2) : "nan",
                     r.b ? cell(r.b->trailing_mean_h2) : "nan",
                     both ? cell(r.b->trailing_mean_h2 - r.a->trailing_mean_h2) : "nan",
                     r.a ? cell(r.a->convergence_time) : "nan",
                     r.b ? cell(r.b->convergence_time) : "nan"});
    }
  }
};

// Pairs stages by index when both runs have the same shape, otherwise by the
// last occurrence of each stage kind.
inline CompareReport compare_runs(const std::filesystem::path& dir_a,
                                  const std::filesystem::path& dir_b) {
  const LoadedRun a = load_run(dir_a);
  const LoadedRun b = load_run(dir_b);
  CompareReport report;
  report.dir_a = dir_a;
  report.dir_b = dir_b;

  bool aligned = a.stages.size() == b.stages.size();
  if (aligned) {
    for (std::size_t i = 0; i < a.stages.size(); ++i) {
      if (a.stages[i].kind != b.stages[i].kind) {
        aligned = false;
        break;
      }
    }
  }

  if (aligned) {
    for (std::size_t i = 0; i < a.stages.size(); ++i) {
      report.rows.push_back(CompareRow{a.stages[i].kind, a.stages[i], b.stages[i]});
    }
    return report;
  }

  auto last_of = [](const LoadedRun& run, const std::string& kind) {
    std::optional<RunStageInfo> out;
    for (const auto& s : run.stages) {
      if (s.kind == kind) out = s;
    }
    return out;
  };
  std::vector<std::string> kinds;
  for (const auto& s : a.stages) {
    if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end()) kinds.push_back(s.kind);
  }
  for (const auto& s : b.stages) {
    if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end()) kinds.push_back(s.kind);
  }
  for (const auto& kind : kinds) {
    report.rows.push_back(CompareRow{kind, last_of(a, kind), last_of(b, kind)});
  }
  return report;
}

}  // namespace restune
