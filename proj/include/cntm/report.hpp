#pragma once

// Metrics tables, aggregate summaries and baseline-relative box plots.
//
// Per-graph table (tab separated, one header line):
//   graph_id predictor edge_accuracy path_accuracy episodes valid_episodes queries valid_queries
// Doubles are printed with 17 significant digits so a table reads back to
// the exact values it was written from.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cntm/errors.hpp"
#include "cntm/harness.hpp"

namespace cntm::report {

inline constexpr const char* kMetricsHeader =
    "graph_id\tpredictor\tedge_accuracy\tpath_accuracy\tepisodes\tvalid_episodes\tqueries\tvalid_queries";

inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_metrics(const std::vector<harness::Metrics>& runs) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& run : runs)
    for (const auto& g : run.graphs)
      out += g.graph_id + "\t" + run.predictor + "\t" + exact(g.edge) + "\t" + exact(g.path) + "\t" +
             std::to_string(g.episodes) + "\t" + std::to_string(g.valid_episodes) + "\t" + std::to_string(g.queries) +
             "\t" + std::to_string(g.valid_queries) + "\n";
  return out;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

template <class T>
T number(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_same_v<T, double>)
      v = std::stod(s, &used);
    else if (s.empty() || s[0] < '0' || s[0] > '9')
      throw std::invalid_argument(s);
    else
      v = static_cast<T>(std::stoull(s, &used));
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError(line, std::string("bad ") + what + " '" + s + "'");
  }
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace detail

// Predictors in order of first appearance, graphs in file order.
inline std::vector<harness::Metrics> parse_metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line) || line != kMetricsHeader) throw ParseError(1, "missing metrics header");
  ++n;
  std::vector<harness::Metrics> runs;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 8) throw ParseError(n, "expected 8 fields, got " + std::to_string(f.size()));
    harness::GraphMetrics g;
    g.graph_id = f[0];
    g.predictor = f[1];
    g.edge = detail::number<double>(f[2], n, "edge_accuracy");
    g.path = detail::number<double>(f[3], n, "path_accuracy");
    g.episodes = detail::number<std::size_t>(f[4], n, "episodes");
    g.valid_episodes = detail::number<std::size_t>(f[5], n, "valid_episodes");
    g.queries = detail::number<std::size_t>(f[6], n, "queries");
    g.valid_queries = detail::number<std::size_t>(f[7], n, "valid_queries");
    auto [it, fresh] = index.emplace(g.predictor, runs.size());
    if (fresh) {
      runs.emplace_back();
      runs.back().predictor = g.predictor;
    }
    runs[it->second].graphs.push_back(std::move(g));
  }
  return runs;
}

inline std::vector<harness::Metrics> load_metrics(const std::string& path) { return parse_metrics(detail::slurp(path)); }

inline void save_metrics(const std::vector<harness::Metrics>& runs, const std::string& path) {
  detail::write_file(path, format_metrics(runs));
}

// Aggregate per predictor: means over graphs, plus the query-pooled edge
// accuracy for readers who prefer that average.
inline std::string format_summary(const std::vector<harness::Metrics>& runs) {
  std::string out = "predictor\tgraphs\tedge_accuracy\tpath_accuracy\tpooled_edge_accuracy\tepisodes\tqueries\n";
  for (const auto& r : runs) {
    std::size_t eps = 0, qs = 0, vq = 0;
    for (const auto& g : r.graphs) {
      eps += g.episodes;
      qs += g.queries;
      vq += g.valid_queries;
    }
    out += r.predictor + "\t" + std::to_string(r.graphs.size()) + "\t" + exact(r.edge_accuracy()) + "\t" +
           exact(r.path_accuracy()) + "\t" + exact(qs ? double(vq) / double(qs) : 0.0) + "\t" + std::to_string(eps) +
           "\t" + std::to_string(qs) + "\n";
  }
  return out;
}

inline constexpr const char* kStatsHeader = "predictor,n,min,whisker_low,q1,median,q3,whisker_high,max,outliers";

inline std::string format_stats_csv(const std::vector<harness::BoxStats>& stats) {
  std::string out = std::string(kStatsHeader) + "\n";
  for (const auto& s : stats)
    out += s.predictor + "," + std::to_string(s.differences.size()) + "," + exact(s.min) + "," + exact(s.whisker_low) +
           "," + exact(s.q1) + "," + exact(s.median) + "," + exact(s.q3) + "," + exact(s.whisker_high) + "," +
           exact(s.max) + "," + std::to_string(s.outliers.size()) + "\n";
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

// Standalone SVG: one box per predictor, accuracy difference to the baseline
// on the vertical axis.
inline std::string render_box_plot(const std::vector<harness::BoxStats>& stats, const std::string& baseline,
                                   const std::string& measure) {
  const double W = 120.0 * double(std::max<std::size_t>(stats.size(), 1)) + 100.0, H = 420.0;
  const double left = 70, right = W - 30, top = 40, bottom = H - 60;
  double lo = 0, hi = 0;
  for (const auto& s : stats) {
    lo = std::min(lo, s.min);
    hi = std::max(hi, s.max);
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto y = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };
  char buf[256];
  std::string out;
  auto add = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    out += buf;
  };
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  add("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n", W, H, W, H);
  add("<rect x=\"0\" y=\"0\" width=\"%.0f\" height=\"%.0f\" fill=\"white\"/>\n", W, H);
  out += "<text x=\"" + std::to_string(int(W / 2)) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         xml_escape(measure + " accuracy minus " + baseline) + "</text>\n";
  add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", left, top, left, bottom);
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", left, y(v), right, y(v));
    add("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">%.2f</text>\n",
        left - 6, y(v) + 4, v);
  }
  add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n", left, y(0),
      right, y(0));
  const double slot = (right - left) / double(std::max<std::size_t>(stats.size(), 1));
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    const double cx = left + slot * (double(i) + 0.5), half = std::min(30.0, slot * 0.3);
    add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", cx, y(s.whisker_low), cx, y(s.q1));
    add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", cx, y(s.q3), cx, y(s.whisker_high));
    add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", cx - half / 2, y(s.whisker_low),
        cx + half / 2, y(s.whisker_low));
    add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", cx - half / 2, y(s.whisker_high),
        cx + half / 2, y(s.whisker_high));
    add("<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"#9ecae1\" stroke=\"black\"/>\n", cx - half,
        y(s.q3), 2 * half, std::max(0.0, y(s.q1) - y(s.q3)));
    add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#c00\" stroke-width=\"2\"/>\n", cx - half,
        y(s.median), cx + half, y(s.median));
    for (double o : s.outliers)
      add("<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.5\" fill=\"none\" stroke=\"black\"/>\n", cx, y(o));
    add("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">", cx,
        bottom + 20);
    out += xml_escape(s.predictor) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace cntm::report
