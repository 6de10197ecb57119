// Copyright (c) 2026, the shardplan authors.
// SPDX-License-Identifier: Apache-2.0
//
// Stage-trace emission: schema JSON or an SVG Gantt chart with one row per
// device and one bar per stage, 10 px per millisecond.

#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "shardplan/error.hpp"
#include "shardplan/oracle.hpp"

namespace shardplan {

inline constexpr double kSvgPxPerMs = 10.0;

inline const char* phase_color(Phase p) {
  switch (p) {
    case Phase::fwd_comp: return "#4c78a8";
    case Phase::fwd_comm: return "#9ecae9";
    case Phase::bwd_comm: return "#f2b05e";
    case Phase::bwd_comp: return "#e45756";
  }
  return "#888888";
}

inline std::string trace_svg(const CostBreakdown& cb) {
  const int devices = static_cast<int>(cb.fwd_ms.size());
  const double left = 70.0;
  const double row_h = 28.0;
  const double bar_h = 20.0;
  const double top = 30.0;
  const double width = left + cb.overall_ms * kSvgPxPerMs + 20.0;
  const double height = top + devices * row_h + 30.0;

  std::ostringstream os;
  os << std::setprecision(10);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "  <text x=\"" << left << "\" y=\"18\" font-size=\"13\" "
        "font-family=\"sans-serif\">overall "
     << cb.overall_ms << " ms</text>\n";
  for (int d = 0; d < devices; ++d) {
    const double y = top + d * row_h;
    os << "  <text x=\"8\" y=\"" << y + bar_h - 5.0
       << "\" font-size=\"12\" font-family=\"sans-serif\">dev " << d
       << "</text>\n";
  }
  for (const TraceEvent& e : cb.events) {
    if (e.dur_ms <= 0.0) continue;
    const double x = left + e.start_ms * kSvgPxPerMs;
    const double y = top + e.device * row_h;
    const double w = e.dur_ms * kSvgPxPerMs;
    os << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w
       << "\" height=\"" << bar_h << "\" fill=\"" << phase_color(e.phase)
       << "\"><title>" << phase_name(e.phase) << " dev " << e.device << " "
       << e.dur_ms << " ms</title></rect>\n";
  }
  // time axis
  const double axis_y = top + devices * row_h + 12.0;
  os << "  <line x1=\"" << left << "\" y1=\"" << axis_y << "\" x2=\""
     << left + cb.overall_ms * kSvgPxPerMs << "\" y2=\"" << axis_y
     << "\" stroke=\"#444\"/>\n";
  for (double t = 0.0; t <= cb.overall_ms + 1e-9; t += 10.0) {
    const double x = left + t * kSvgPxPerMs;
    os << "  <line x1=\"" << x << "\" y1=\"" << axis_y - 3 << "\" x2=\"" << x
       << "\" y2=\"" << axis_y + 3 << "\" stroke=\"#444\"/>\n";
    os << "  <text x=\"" << x << "\" y=\"" << axis_y + 15
       << "\" font-size=\"10\" font-family=\"sans-serif\" "
          "text-anchor=\"middle\">"
       << t << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

enum class TraceFormat { json, svg };

inline void emit_trace(const CostBreakdown& cb, const std::string& path,
                       TraceFormat format) {
  std::ofstream os(path);
  if (!os) raise(ErrorKind::bad_input, "cannot open " + path + " for writing");
  if (format == TraceFormat::json)
    os << breakdown_to_json(cb).dump(2) << '\n';
  else
    os << trace_svg(cb);
}

}  // namespace shardplan
