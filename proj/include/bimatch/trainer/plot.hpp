// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal SVG line charts and a reader for the comma-separated files the
// trainer writes.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bimatch/common.hpp"

namespace bimatch::trainer {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct LineChart {
  std::string title, x_label, y_label;
  std::vector<Series> series;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace detail

inline std::string render_svg(const LineChart& chart) {
  using detail::fmt;
  if (chart.series.empty()) throw InvalidArgument("plot: no series");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size() || s.x.empty()) throw InvalidArgument("plot: series '" + s.name + "' is malformed");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw NumericError("plot: non-finite point in series '" + s.name + "'");
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double w = 640, h = 400, left = 70, right = 160, top = 40, bottom = 60;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << " " << h << "\">\n"
    << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n"
    << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << detail::xml_escape(chart.title) << "</text>\n"
    << "<g stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n"
    << "</g>\n"
    << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << fmt(top + ph + 16) << "\" text-anchor=\"middle\">"
      << detail::tick(xv) << "</text>\n"
      << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py(yv) + 4) << "\" text-anchor=\"end\">"
      << detail::tick(yv) << "</text>\n";
  }
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(h - 16) << "\" text-anchor=\"middle\">"
    << detail::xml_escape(chart.x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << fmt(top + ph / 2) << ")\">" << detail::xml_escape(chart.y_label) << "</text>\n"
    << "</g>\n";
  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const char* col = colors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << fmt(px(s.x[i])) << "," << fmt(py(s.y[i]));
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      o << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i])) << "\" r=\"3\" fill=\"" << col
        << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << fmt(left + pw + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(left + pw + 32)
      << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << fmt(left + pw + 38) << "\" y=\"" << fmt(ly + 4)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ----------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError("CSV has no column '" + name + "'");
  }
  double number(std::size_t row, const std::string& col) const {
    const std::string& s = rows.at(row).at(column(col));
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw FormatError("");
      return v;
    } catch (const std::exception&) {
      throw FormatError("CSV cell '" + s + "' in column " + col + " is not a number");
    }
  }
};

// Plain comma splitting; the files this reads never quote fields.
inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    auto row = split(line);
    if (row.size() != t.header.size()) throw FormatError("CSV row width differs from header: " + line);
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw FormatError("empty CSV");
  return t;
}

// Charts for a sweep CSV: R@1 against the mask rate, and R@1 against the
// loss weight with one line per fixed mask rate.
inline std::vector<std::pair<std::string, LineChart>> sweep_charts(const CsvTable& t) {
  LineChart mask{"Rank@1 vs image mask rate", "m_p", "R@1 (%)", {}};
  Series ms{"beta fixed", {}, {}};
  std::map<double, Series> by_mask;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& exp = t.rows[r][t.column("experiment")];
    const double m = t.number(r, "m_p"), b = t.number(r, "beta"), r1 = t.number(r, "R@1");
    if (exp == "mask_rate") {
      ms.x.push_back(m);
      ms.y.push_back(r1);
    } else {
      auto& s = by_mask[m];
      s.name = "m_p = " + detail::tick(m);
      s.x.push_back(b);
      s.y.push_back(r1);
    }
  }
  std::vector<std::pair<std::string, LineChart>> out;
  if (!ms.x.empty()) {
    mask.series.push_back(ms);
    out.emplace_back("sweep_mask_rate.svg", mask);
  }
  if (!by_mask.empty()) {
    LineChart weight{"Rank@1 vs MIM loss weight", "beta", "R@1 (%)", {}};
    for (auto& [m, s] : by_mask) weight.series.push_back(s);
    out.emplace_back("sweep_loss_weight.svg", weight);
  }
  return out;
}

// Charts for a run's metrics CSV: loss components and test Rank@1 by epoch.
inline std::vector<std::pair<std::string, LineChart>> metrics_charts(const CsvTable& t) {
  LineChart losses{"Training losses", "epoch", "loss", {}};
  for (const char* name : {"total", "id", "sdm", "mlm", "mim"}) {
    Series s{name, {}, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      s.x.push_back(t.number(r, "epoch"));
      s.y.push_back(t.number(r, name));
    }
    losses.series.push_back(std::move(s));
  }
  LineChart rank{"Test retrieval", "epoch", "%", {}};
  for (const char* name : {"R@1", "R@5", "R@10", "mAP"}) {
    Series s{name, {}, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      s.x.push_back(t.number(r, "epoch"));
      s.y.push_back(t.number(r, name));
    }
    rank.series.push_back(std::move(s));
  }
  return {{"losses.svg", losses}, {"retrieval.svg", rank}};
}

// Picks the chart set by the CSV's columns.
inline std::vector<std::pair<std::string, LineChart>> charts_for(const CsvTable& t) {
  const auto has = [&](const char* c) { return std::find(t.header.begin(), t.header.end(), c) != t.header.end(); };
  if (has("experiment") && has("m_p") && has("beta")) return sweep_charts(t);
  if (has("epoch") && has("total")) return metrics_charts(t);
  throw FormatError("CSV is neither a sweep table nor a metrics log");
}

// Well-formedness check: balanced, properly nested tags under one <svg>
// root. Sufficient for the files render_svg produces.
inline bool is_well_formed_svg(const std::string& s) {
  std::vector<std::string> stack;
  bool saw_root = false;
  std::size_t i = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const std::size_t j = s.find('>', i);
    if (j == std::string::npos) return false;
    const std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (stack.empty()) {
      if (saw_root || name != "svg") return false;
      saw_root = true;
    }
    if (tag.back() != '/') stack.push_back(name);
  }
  return saw_root && stack.empty();
}

}  // namespace bimatch::trainer
