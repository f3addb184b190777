// Copyright 2026 The TDR-OBCA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Result files: per-step CSV, top-down SVG, full JSON.

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tdr_obca/common.hpp"
#include "tdr_obca/pipeline.hpp"
#include "tdr_obca/serialization.hpp"

namespace tdr_obca {

struct OutputFormats {
  bool csv = false;
  bool svg = false;
  bool json = false;
};

/// "csv,svg,json" in any order and subset.
inline OutputFormats parse_formats(const std::string& list) {
  OutputFormats f;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "csv") {
      f.csv = true;
    } else if (item == "svg") {
      f.svg = true;
    } else if (item == "json") {
      f.json = true;
    } else {
      detail::fail(ErrorCode::kInvalidArgument, "unknown output format '" + item + "'");
    }
  }
  return f;
}

namespace output_detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace output_detail

inline constexpr const char* kCsvHeader = "k,t,x,y,v,phi,delta,a,jerk,gear";

/// One row per state. delta and a are the controls applied from that state
/// (empty on the last row); jerk is (a(k) - a(k-1)) / dt (empty on row 0).
inline std::string trajectory_csv(const PlanResult& res) {
  using output_detail::fmt;
  const MpcSolution& s = res.trajectory;
  std::vector<Gear> gear(s.states.size(), Gear::kForward);
  for (const auto& g : res.gear_partitions) {
    for (std::size_t i = g.begin; i < g.end && i < gear.size(); ++i) gear[i] = g.gear;
  }
  std::string out = std::string(kCsvHeader) + "\n";
  const std::size_t K = s.controls.size();
  for (std::size_t k = 0; k < s.states.size(); ++k) {
    const VehicleState& x = s.states[k];
    out += std::to_string(k) + "," + fmt(static_cast<double>(k) * s.dt) + "," + fmt(x.x) + "," +
           fmt(x.y) + "," + fmt(x.v) + "," + fmt(x.phi) + ",";
    if (k < K) out += fmt(s.controls[k].steering) + "," + fmt(s.controls[k].accel);
    else out += ",";
    out += ",";
    if (k >= 1 && k < K) out += fmt((s.controls[k].accel - s.controls[k - 1].accel) / s.dt);
    out += std::string(",") + to_string(gear[k]) + "\n";
  }
  return out;
}

struct CsvTrajectory {
  std::vector<double> t;
  std::vector<VehicleState> states;
  std::vector<ControlInput> controls;
  std::vector<Gear> gears;
};

inline CsvTrajectory parse_trajectory_csv(const std::string& text) {
  CsvTrajectory out;
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != kCsvHeader) {
    detail::fail(ErrorCode::kInvalidArgument, "unexpected CSV header");
  }
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 10) detail::fail(ErrorCode::kInvalidArgument, "CSV row needs 10 fields");
    out.t.push_back(std::stod(f[1]));
    out.states.push_back({std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    if (!f[6].empty()) out.controls.push_back({std::stod(f[6]), std::stod(f[7])});
    out.gears.push_back(io_detail::parse_gear(f[9]));
  }
  return out;
}

/// Top-down view: one <polygon> per obstacle, footprint snapshots as
/// <path>, the rear-axle path as a single <polyline>.
inline std::string scene_svg(const Scenario& sc, const PlanResult& res) {
  using output_detail::fmt;
  const std::vector<ConvexObstacle> obstacles = sc.all_obstacles();
  const auto& states = res.trajectory.states;
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  auto grow = [&](const Point2& p) {
    x0 = std::min(x0, p.x());
    y0 = std::min(y0, p.y());
    x1 = std::max(x1, p.x());
    y1 = std::max(y1, p.y());
  };
  for (const auto& o : obstacles) {
    for (const auto& v : o.vertices()) grow(v);
  }
  for (const auto& s : states) {
    for (const auto& v : sc.footprint.vertices_at(s)) grow(v);
  }
  grow({sc.x0.x, sc.x0.y});
  grow({sc.x_F.x, sc.x_F.y});
  const double pad = 1.0;
  x0 -= pad;
  y0 -= pad;
  x1 += pad;
  y1 += pad;
  const double scale = 20.0;  // px per meter
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt((x1 - x0) * scale)
      << "\" height=\"" << fmt((y1 - y0) * scale) << "\" viewBox=\"" << fmt(x0) << " "
      << fmt(-y1) << " " << fmt(x1 - x0) << " " << fmt(y1 - y0) << "\">\n";
  out << "<g transform=\"scale(1,-1)\" stroke-width=\"0.05\">\n";
  for (const auto& o : obstacles) {
    out << "<polygon class=\"obstacle\" fill=\"#888\" stroke=\"#444\" points=\"";
    for (const auto& v : o.vertices()) out << fmt(v.x()) << "," << fmt(v.y()) << " ";
    out << "\"/>\n";
  }
  const std::size_t every = std::max<std::size_t>(1, states.size() / 12);
  for (std::size_t k = 0; k < states.size(); k += every) {
    const auto body = sc.footprint.vertices_at(states[k]);
    out << "<path class=\"footprint\" fill=\"none\" stroke=\"#4a90d9\" d=\"M";
    for (const auto& v : body) out << " " << fmt(v.x()) << "," << fmt(v.y());
    out << " Z\"/>\n";
  }
  out << "<polyline class=\"path\" fill=\"none\" stroke=\"#d0021b\" points=\"";
  for (const auto& s : states) out << fmt(s.x) << "," << fmt(s.y) << " ";
  out << "\"/>\n";
  out << "<circle class=\"start\" r=\"0.2\" fill=\"#2a2\" cx=\"" << fmt(sc.x0.x) << "\" cy=\""
      << fmt(sc.x0.y) << "\"/>\n";
  out << "<circle class=\"goal\" r=\"0.2\" fill=\"#a22\" cx=\"" << fmt(sc.x_F.x) << "\" cy=\""
      << fmt(sc.x_F.y) << "\"/>\n";
  out << "</g>\n</svg>\n";
  return out.str();
}

/// Writes <stem>.csv / .svg / .json into `dir` (created if missing) and
/// returns the written paths.
inline std::vector<std::filesystem::path> emit_outputs(const PlanResult& res, const Scenario& sc,
                                                       const std::filesystem::path& dir,
                                                       const OutputFormats& formats,
                                                       const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) detail::fail(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const char* ext, const std::string& text) {
    const std::filesystem::path p = dir / (stem + ext);
    write_text_file(p, text);
    written.push_back(p);
  };
  if (formats.csv) put(".csv", trajectory_csv(res));
  if (formats.svg) put(".svg", scene_svg(sc, res));
  if (formats.json) put(".json", result_json(res).dump(1));
  return written;
}

}  // namespace tdr_obca
