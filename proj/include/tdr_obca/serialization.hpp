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

// JSON for scenarios (schema 1), planner configuration and plan results.
// Readers reject unknown keys. Non-finite numbers are written as null.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdr_obca/common.hpp"
#include "tdr_obca/geometry.hpp"
#include "tdr_obca/grid_search.hpp"
#include "tdr_obca/mpc.hpp"
#include "tdr_obca/pipeline.hpp"
#include "tdr_obca/vehicle.hpp"

namespace tdr_obca {

using Json = nlohmann::json;

inline constexpr int kScenarioSchema = 1;

/// Everything a scenario file or a --config file can override.
struct PlannerConfig {
  GridConfig grid;
  MpcConfig mpc;
  PlanOptions plan;
};

namespace io_detail {

// Reads an object field by field; finish() rejects keys nobody asked for.
class Reader {
 public:
  Reader(const Json& j, std::string where, ErrorCode code)
      : j_(j), where_(std::move(where)), code_(code) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    detail::fail(code_, where_ + ": " + msg);
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& at(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(std::string("missing key '") + key + "'");
    return j_.at(key);
  }

  std::string path(const char* key) const { return where_ + "." + key; }
  ErrorCode code() const { return code_; }

  double number(const char* key) { return to_number(at(key), key); }
  void number(const char* key, double& out) {
    if (has(key)) out = number(key);
  }
  // Null reads as +infinity.
  void number_or_inf(const char* key, double& out) {
    if (!has(key)) return;
    const Json& v = at(key);
    out = v.is_null() ? std::numeric_limits<double>::infinity() : to_number(v, key);
  }
  template <typename Int>
  void integer(const char* key, Int& out) {
    if (!has(key)) return;
    const Json& v = at(key);
    if (!v.is_number_integer()) fail(std::string("'") + key + "' must be an integer");
    const auto x = v.get<long long>();
    if constexpr (std::is_unsigned_v<Int>) {
      if (x < 0) fail(std::string("'") + key + "' must be non-negative");
    }
    out = static_cast<Int>(x);
  }
  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    const Json& v = at(key);
    if (!v.is_boolean()) fail(std::string("'") + key + "' must be a boolean");
    out = v.get<bool>();
  }
  std::string string(const char* key) {
    const Json& v = at(key);
    if (!v.is_string()) fail(std::string("'") + key + "' must be a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail("unknown key '" + it.key() + "'");
    }
  }

  double to_number(const Json& v, const std::string& key) const {
    if (!v.is_number()) fail("'" + key + "' must be a number");
    return v.get<double>();
  }

 private:
  const Json& j_;
  std::string where_;
  ErrorCode code_;
  std::set<std::string> seen_;
};

inline Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double read_num(const Json& v) {
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) detail::fail(ErrorCode::kInvalidArgument, "expected a number");
  return v.get<double>();
}

inline Point2 read_point(const Json& v, const Reader& r) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    r.fail("a point is [x, y]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

inline Range read_range(const Json& v, const Reader& r, const char* key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    r.fail(std::string("'") + key + "' is [lower, upper]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

inline VehicleState read_pose(const Json& v, const std::string& where, ErrorCode code) {
  Reader r(v, where, code);
  VehicleState s;
  s.x = r.number("x");
  s.y = r.number("y");
  s.phi = r.number("phi");
  r.number("v", s.v);
  r.finish();
  return s;
}

inline Json pose_json(const VehicleState& s) {
  return {{"x", s.x}, {"y", s.y}, {"phi", s.phi}, {"v", s.v}};
}

}  // namespace io_detail

// ---------------------------------------------------------------- config

inline void apply_grid_config(const Json& j, GridConfig& c, const std::string& where,
                              ErrorCode code) {
  io_detail::Reader r(j, where, code);
  r.number("xy_resolution", c.xy_resolution);
  r.number("phi_resolution", c.phi_resolution);
  r.number("primitive_arc", c.primitive_arc);
  r.integer("steering_samples", c.steering_samples);
  r.number("reverse_penalty", c.reverse_penalty);
  r.number("gear_switch_penalty", c.gear_switch_penalty);
  r.boolean("analytic_expansion", c.analytic_expansion);
  r.number("collision_margin", c.collision_margin);
  r.number("steering_change_penalty", c.steering_change_penalty);
  r.number("sample_step", c.sample_step);
  r.number("bounds_margin", c.bounds_margin);
  r.integer("max_expansions", c.max_expansions);
  r.integer("analytic_interval", c.analytic_interval);
  r.finish();
}

inline void apply_mpc_config(const Json& j, MpcConfig& c, const std::string& where,
                             ErrorCode code) {
  io_detail::Reader r(j, where, code);
  r.number("alpha_x", c.alpha_x);
  r.number("alpha_xp", c.alpha_xp);
  r.number("alpha_u", c.alpha_u);
  r.number("alpha_utilde", c.alpha_utilde);
  r.number("alpha_e", c.alpha_e);
  r.number("beta", c.beta);
  r.integer("K", c.K);
  r.number("d_min", c.d_min);
  r.number("slack_epsilon", c.slack_epsilon);
  r.number("kkt_tol", c.kkt_tol);
  r.integer("max_iter", c.max_iter);
  r.number_or_inf("max_wall_seconds", c.max_wall_seconds);
  r.boolean("solver_trace", c.solver_trace);
  if (r.has("mode")) {
    const auto m = parse_mode(r.string("mode"));
    if (!m) r.fail("mode must be base, td or tdr");
    c.mode = *m;
  }
  r.finish();
}

inline void apply_plan_options(const Json& j, PlanOptions& o, const std::string& where,
                               ErrorCode code) {
  io_detail::Reader r(j, where, code);
  r.number("horizon_ratio", o.horizon_ratio);
  r.number("jerk_weight", o.jerk_weight);
  r.integer("dual_threads", o.dual_threads);
  r.number("stop_speed", o.stop_speed);
  if (r.has("cold_start")) {
    const Json& v = r.at("cold_start");
    if (v.is_null()) {
      o.cold_start.reset();
    } else if (v.is_boolean()) {
      o.cold_start = v.get<bool>();
    } else {
      r.fail("'cold_start' must be a boolean or null");
    }
  }
  r.finish();
}

/// Applies {"grid": {...}, "mpc": {...}, "plan": {...}} on top of `c`.
inline void apply_config(const Json& j, PlannerConfig& c, const std::string& where = "config",
                         ErrorCode code = ErrorCode::kInvalidArgument) {
  io_detail::Reader r(j, where, code);
  if (r.has("grid")) apply_grid_config(r.at("grid"), c.grid, r.path("grid"), code);
  if (r.has("mpc")) apply_mpc_config(r.at("mpc"), c.mpc, r.path("mpc"), code);
  if (r.has("plan")) apply_plan_options(r.at("plan"), c.plan, r.path("plan"), code);
  r.finish();
}

inline Json grid_config_json(const GridConfig& c) {
  return {{"xy_resolution", c.xy_resolution},
          {"phi_resolution", c.phi_resolution},
          {"primitive_arc", c.primitive_arc},
          {"steering_samples", c.steering_samples},
          {"reverse_penalty", c.reverse_penalty},
          {"gear_switch_penalty", c.gear_switch_penalty},
          {"analytic_expansion", c.analytic_expansion},
          {"collision_margin", c.collision_margin},
          {"steering_change_penalty", c.steering_change_penalty},
          {"sample_step", c.sample_step},
          {"bounds_margin", c.bounds_margin},
          {"max_expansions", c.max_expansions},
          {"analytic_interval", c.analytic_interval}};
}

inline Json mpc_config_json(const MpcConfig& c) {
  return {{"alpha_x", c.alpha_x},
          {"alpha_xp", c.alpha_xp},
          {"alpha_u", c.alpha_u},
          {"alpha_utilde", c.alpha_utilde},
          {"alpha_e", c.alpha_e},
          {"beta", c.beta},
          {"K", c.K},
          {"d_min", c.d_min},
          {"slack_epsilon", c.slack_epsilon},
          {"kkt_tol", c.kkt_tol},
          {"max_iter", c.max_iter},
          {"max_wall_seconds", io_detail::num(c.max_wall_seconds)},
          {"solver_trace", c.solver_trace},
          {"mode", std::string(to_string(c.mode))}};
}

inline Json plan_options_json(const PlanOptions& o) {
  return {{"horizon_ratio", o.horizon_ratio},
          {"jerk_weight", o.jerk_weight},
          {"dual_threads", o.dual_threads},
          {"stop_speed", o.stop_speed},
          {"cold_start", o.cold_start ? Json(*o.cold_start) : Json(nullptr)}};
}

inline Json config_json(const PlannerConfig& c) {
  return {{"grid", grid_config_json(c.grid)},
          {"mpc", mpc_config_json(c.mpc)},
          {"plan", plan_options_json(c.plan)}};
}

// -------------------------------------------------------------- scenario

struct ScenarioFile {
  Scenario scenario;
  PlannerConfig config;  // defaults with the file's overrides applied
};

inline ScenarioFile parse_scenario(const Json& j) {
  using io_detail::Reader;
  constexpr ErrorCode kCode = ErrorCode::kInvalidScenario;
  Reader r(j, "scenario", kCode);
  const Json& schema = r.at("schema");
  if (!schema.is_number_integer() || schema.get<int>() != kScenarioSchema) {
    r.fail("unsupported schema (expected " + std::to_string(kScenarioSchema) + ")");
  }
  ScenarioFile out;
  Scenario& sc = out.scenario;
  if (r.has("name")) sc.name = r.string("name");
  if (r.has("description")) (void)r.string("description");
  r.number("boundary_thickness", sc.boundary_thickness);

  if (r.has("vehicle")) {
    Reader v(r.at("vehicle"), r.path("vehicle"), kCode);
    v.number("length", sc.footprint.length);
    v.number("width", sc.footprint.width);
    v.number("rear_axle_to_center", sc.footprint.rear_axle_to_center);
    v.number("wheelbase", sc.limits.wheelbase);
    if (v.has("limits")) {
      Reader l(v.at("limits"), v.path("limits"), kCode);
      auto range = [&](const char* key, Range& dst) {
        if (l.has(key)) dst = io_detail::read_range(l.at(key), l, key);
      };
      range("steering", sc.limits.steering);
      range("steering_rate", sc.limits.steering_rate);
      range("accel", sc.limits.accel);
      range("speed", sc.limits.speed);
      l.finish();
    }
    v.finish();
  }

  if (r.has("obstacles")) {
    const Json& list = r.at("obstacles");
    if (!list.is_array()) r.fail("'obstacles' must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      Reader o(list[i], r.path("obstacles") + "[" + std::to_string(i) + "]", kCode);
      ObstacleKind kind = ObstacleKind::kAgentB;
      if (o.has("kind")) {
        const std::string k = o.string("kind");
        if (k == "boundary") {
          kind = ObstacleKind::kBoundaryA;
        } else if (k != "agent") {
          o.fail("kind must be 'boundary' or 'agent'");
        }
      }
      const bool has_vertices = o.has("vertices");
      const bool has_segment = o.has("segment");
      if (has_vertices == has_segment) o.fail("give exactly one of 'vertices' or 'segment'");
      if (has_vertices) {
        const Json& vs = o.at("vertices");
        if (!vs.is_array()) o.fail("'vertices' must be an array");
        std::vector<Point2> pts;
        for (const auto& p : vs) pts.push_back(io_detail::read_point(p, o));
        try {
          sc.obstacles.push_back(polygon_from_vertices(std::span<const Point2>(pts), kind));
        } catch (const PlannerError& e) {
          o.fail(e.what());
        }
      } else {
        const Json& seg = o.at("segment");
        if (!seg.is_array() || seg.size() != 2) o.fail("'segment' is [[x0, y0], [x1, y1]]");
        const Point2 a = io_detail::read_point(seg[0], o), b = io_detail::read_point(seg[1], o);
        if (o.has("thickness") || kind == ObstacleKind::kAgentB) {
          double t = sc.boundary_thickness;
          o.number("thickness", t);
          try {
            const ConvexObstacle ob = segment_to_obstacle(a, b, t);
            sc.obstacles.push_back(ConvexObstacle(ob.normals(), ob.offsets(), kind));
          } catch (const PlannerError& e) {
            o.fail(e.what());
          }
        } else {
          if ((b - a).norm() <= 1e-12) o.fail("zero-length segment");
          sc.boundary_segments.emplace_back(a, b);
        }
      }
      o.finish();
    }
  }

  sc.x0 = io_detail::read_pose(r.at("start"), r.path("start"), kCode);
  sc.x_F = io_detail::read_pose(r.at("goal"), r.path("goal"), kCode);
  if (r.has("config")) apply_config(r.at("config"), out.config, r.path("config"), kCode);
  r.finish();
  try {
    sc.validate();
  } catch (const PlannerError& e) {
    detail::fail(kCode, e.what());
  }
  return out;
}

inline ScenarioFile parse_scenario(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    detail::fail(ErrorCode::kInvalidScenario, std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(j);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) detail::fail(ErrorCode::kIoError, "cannot read " + path.string());
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) detail::fail(ErrorCode::kIoError, "cannot create " + path.string());
  out << text;
  out.close();
  if (!out) detail::fail(ErrorCode::kIoError, "cannot write " + path.string());
}

inline ScenarioFile load_scenario(const std::filesystem::path& path) {
  ScenarioFile f = parse_scenario(read_text_file(path));
  if (f.scenario.name.empty()) f.scenario.name = path.stem().string();
  return f;
}

/// Writes a scenario back in schema 1. Obstacles keep their halfspace form
/// through their vertices.
inline Json scenario_json(const Scenario& sc) {
  Json obstacles = Json::array();
  for (const auto& o : sc.obstacles) {
    Json pts = Json::array();
    for (const auto& v : o.vertices()) pts.push_back({v.x(), v.y()});
    obstacles.push_back(
        {{"vertices", pts},
         {"kind", o.kind() == ObstacleKind::kBoundaryA ? "boundary" : "agent"}});
  }
  for (const auto& [a, b] : sc.boundary_segments) {
    obstacles.push_back({{"segment", {{a.x(), a.y()}, {b.x(), b.y()}}}, {"kind", "boundary"}});
  }
  const VehicleLimits& l = sc.limits;
  return {{"schema", kScenarioSchema},
          {"name", sc.name},
          {"boundary_thickness", sc.boundary_thickness},
          {"vehicle",
           {{"length", sc.footprint.length},
            {"width", sc.footprint.width},
            {"rear_axle_to_center", sc.footprint.rear_axle_to_center},
            {"wheelbase", l.wheelbase},
            {"limits",
             {{"steering", {l.steering.lower, l.steering.upper}},
              {"steering_rate", {l.steering_rate.lower, l.steering_rate.upper}},
              {"accel", {l.accel.lower, l.accel.upper}},
              {"speed", {l.speed.lower, l.speed.upper}}}}}},
          {"obstacles", obstacles},
          {"start", io_detail::pose_json(sc.x0)},
          {"goal", io_detail::pose_json(sc.x_F)}};
}

// ---------------------------------------------------------------- result

namespace io_detail {

inline Json states_json(const std::vector<VehicleState>& s) {
  Json a = Json::array();
  for (const auto& x : s) a.push_back({x.x, x.y, x.v, x.phi});
  return a;
}
inline std::vector<VehicleState> read_states(const Json& a) {
  std::vector<VehicleState> s;
  for (const auto& r : a) {
    if (!r.is_array() || r.size() != 4) detail::fail(ErrorCode::kInvalidArgument, "state is [x, y, v, phi]");
    s.push_back({r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()});
  }
  return s;
}
inline Json controls_json(const std::vector<ControlInput>& u) {
  Json a = Json::array();
  for (const auto& c : u) a.push_back({c.steering, c.accel});
  return a;
}
inline std::vector<ControlInput> read_controls(const Json& a) {
  std::vector<ControlInput> u;
  for (const auto& r : a) {
    if (!r.is_array() || r.size() != 2) detail::fail(ErrorCode::kInvalidArgument, "control is [steering, accel]");
    u.push_back({r[0].get<double>(), r[1].get<double>()});
  }
  return u;
}

inline Json duals_json(const DualWarmStart& d) {
  Json lambda = Json::array(), mu = Json::array();
  for (std::size_t m = 0; m < d.lambda.size(); ++m) {
    Json lm = Json::array(), mm = Json::array();
    for (std::size_t k = 0; k < d.lambda[m].size(); ++k) {
      lm.push_back(std::vector<double>(d.lambda[m][k].data(),
                                       d.lambda[m][k].data() + d.lambda[m][k].size()));
      mm.push_back(std::vector<double>(d.mu[m][k].data(), d.mu[m][k].data() + 4));
    }
    lambda.push_back(lm);
    mu.push_back(mm);
  }
  Json degenerate = Json::array();
  for (const auto& row : d.degenerate) degenerate.push_back(std::vector<bool>(row.begin(), row.end()));
  return {{"lambda", lambda}, {"mu", mu}, {"d", d.d}, {"degenerate", degenerate}};
}

inline DualWarmStart read_duals(const Json& j) {
  Reader r(j, "duals", ErrorCode::kInvalidArgument);
  DualWarmStart d;
  const Json& lambda = r.at("lambda");
  const Json& mu = r.at("mu");
  d.d = r.at("d").get<std::vector<std::vector<double>>>();
  for (const auto& row : r.at("degenerate")) d.degenerate.push_back(row.get<std::vector<bool>>());
  r.finish();
  for (const auto& lm : lambda) {
    std::vector<Eigen::VectorXd> row;
    for (const auto& v : lm) {
      const auto x = v.get<std::vector<double>>();
      row.push_back(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    }
    d.lambda.push_back(std::move(row));
  }
  for (const auto& mm : mu) {
    std::vector<Eigen::Vector4d> row;
    for (const auto& v : mm) {
      const auto x = v.get<std::vector<double>>();
      if (x.size() != 4) detail::fail(ErrorCode::kInvalidArgument, "mu blocks have 4 entries");
      row.emplace_back(x[0], x[1], x[2], x[3]);
    }
    d.mu.push_back(std::move(row));
  }
  return d;
}

inline NlpStatus parse_status(const std::string& s) {
  for (NlpStatus st : {NlpStatus::kOptimal, NlpStatus::kInfeasible, NlpStatus::kMaxIterations,
                       NlpStatus::kNumericalFailure}) {
    if (to_string(st) == s) return st;
  }
  detail::fail(ErrorCode::kInvalidArgument, "unknown solver status '" + s + "'");
}

inline LimitQuantity parse_quantity(const std::string& s) {
  for (LimitQuantity q : {LimitQuantity::kSteering, LimitQuantity::kSteeringRate,
                          LimitQuantity::kAccel, LimitQuantity::kSpeed}) {
    if (to_string(q) == s) return q;
  }
  detail::fail(ErrorCode::kInvalidArgument, "unknown limit quantity '" + s + "'");
}

inline Gear parse_gear(const std::string& s) {
  if (s == "forward") return Gear::kForward;
  if (s == "reverse") return Gear::kReverse;
  detail::fail(ErrorCode::kInvalidArgument, "unknown gear '" + s + "'");
}

}  // namespace io_detail

inline Json solution_json(const MpcSolution& sol) {
  using namespace io_detail;
  const MpcReport& rep = sol.report;
  return {{"dt", sol.dt},
          {"states", states_json(sol.states)},
          {"controls", controls_json(sol.controls)},
          {"duals", duals_json(sol.duals)},
          {"x_F", pose_json(sol.x_F)},
          {"u_init", {sol.u_init.steering, sol.u_init.accel}},
          {"u_prev", sol.u_prev ? controls_json(*sol.u_prev) : Json(nullptr)},
          {"config", mpc_config_json(sol.config)},
          {"report",
           {{"status", std::string(to_string(rep.status))},
            {"iterations", rep.iterations},
            {"stationarity", num(rep.stationarity)},
            {"primal_infeasibility", num(rep.primal_infeasibility)},
            {"complementarity", num(rep.complementarity)},
            {"objective", num(rep.objective)},
            {"wall_time", rep.wall_time}}}};
}

inline MpcSolution parse_solution(const Json& j) {
  using namespace io_detail;
  constexpr ErrorCode kCode = ErrorCode::kInvalidArgument;
  Reader r(j, "trajectory", kCode);
  MpcSolution sol;
  sol.dt = r.number("dt");
  sol.states = read_states(r.at("states"));
  sol.controls = read_controls(r.at("controls"));
  sol.duals = read_duals(r.at("duals"));
  sol.x_F = read_pose(r.at("x_F"), r.path("x_F"), kCode);
  const auto u0 = read_controls(Json::array({r.at("u_init")}));
  sol.u_init = u0.front();
  const Json& up = r.at("u_prev");
  if (!up.is_null()) sol.u_prev = read_controls(up);
  apply_mpc_config(r.at("config"), sol.config, r.path("config"), kCode);
  {
    Reader q(r.at("report"), r.path("report"), kCode);
    sol.report.status = parse_status(q.string("status"));
    q.integer("iterations", sol.report.iterations);
    sol.report.stationarity = read_num(q.at("stationarity"));
    sol.report.primal_infeasibility = read_num(q.at("primal_infeasibility"));
    sol.report.complementarity = read_num(q.at("complementarity"));
    sol.report.objective = read_num(q.at("objective"));
    sol.report.wall_time = q.number("wall_time");
    q.finish();
  }
  r.finish();
  return sol;
}

inline Json audit_json(const AuditReport& a) {
  using io_detail::num;
  Json limits = Json::array(), certs = Json::array(), cols = Json::array();
  for (const auto& v : a.limit_violations) {
    limits.push_back({{"index", v.index},
                      {"quantity", std::string(to_string(v.quantity))},
                      {"value", v.value}});
  }
  for (const auto& v : a.certificate_violations) {
    certs.push_back({{"m", v.m}, {"k", v.k}, {"certified", v.certified}, {"distance", v.distance}});
  }
  for (const auto& c : a.collisions) cols.push_back({{"m", c.m}, {"k", c.k}, {"depth", c.depth}});
  return {{"passed", a.passed()},
          {"max_dynamics_residual", num(a.max_dynamics_residual)},
          {"dynamics_flagged", a.dynamics_flagged},
          {"limit_violations", limits},
          {"certificate_violations", certs},
          {"collisions", cols},
          {"min_distance", num(a.min_distance)},
          {"cost", num(a.cost)}};
}

inline AuditReport parse_audit(const Json& j) {
  using namespace io_detail;
  Reader r(j, "audit", ErrorCode::kInvalidArgument);
  AuditReport a;
  (void)r.at("passed");
  a.max_dynamics_residual = read_num(r.at("max_dynamics_residual"));
  a.dynamics_flagged = r.at("dynamics_flagged").get<std::vector<std::size_t>>();
  for (const auto& v : r.at("limit_violations")) {
    a.limit_violations.push_back({v.at("index").get<std::size_t>(),
                                  parse_quantity(v.at("quantity").get<std::string>()),
                                  v.at("value").get<double>()});
  }
  for (const auto& v : r.at("certificate_violations")) {
    a.certificate_violations.push_back({v.at("m").get<std::size_t>(), v.at("k").get<std::size_t>(),
                                        v.at("certified").get<double>(),
                                        v.at("distance").get<double>()});
  }
  for (const auto& c : r.at("collisions")) {
    a.collisions.push_back(
        {c.at("m").get<std::size_t>(), c.at("k").get<std::size_t>(), c.at("depth").get<double>()});
  }
  a.min_distance = read_num(r.at("min_distance"));
  a.cost = read_num(r.at("cost"));
  r.finish();
  return a;
}

inline Json result_json(const PlanResult& res) {
  using namespace io_detail;
  Json coarse = Json::array();
  for (const auto& p : res.coarse_path) coarse.push_back({p.x, p.y, p.phi, to_string(p.gear)});
  Json parts = Json::array();
  for (const auto& g : res.gear_partitions) {
    parts.push_back({{"gear", to_string(g.gear)}, {"begin", g.begin}, {"end", g.end}});
  }
  const PlanTimings& t = res.timings;
  return {{"mode", std::string(to_string(res.mode))},
          {"cold_start", res.cold_start},
          {"status", std::string(to_string(res.status()))},
          {"success", res.success()},
          {"coarse_path", coarse},
          {"warm_start",
           {{"dt", res.warm_start.dt},
            {"states", states_json(res.warm_start.states)},
            {"controls", controls_json(res.warm_start.controls)}}},
          {"trajectory", solution_json(res.trajectory)},
          {"gear_partitions", parts},
          {"audit", audit_json(res.audit)},
          {"timings",
           {{"coarse_search", t.coarse_search},
            {"speed_profile", t.speed_profile},
            {"dual_warm_start", t.dual_warm_start},
            {"mpc", t.mpc},
            {"audit", t.audit},
            {"frame", t.frame},
            {"total", t.total}}}};
}

inline PlanResult parse_result(const Json& j) {
  using namespace io_detail;
  constexpr ErrorCode kCode = ErrorCode::kInvalidArgument;
  Reader r(j, "result", kCode);
  PlanResult res;
  const auto mode = parse_mode(r.string("mode"));
  if (!mode) r.fail("unknown mode");
  res.mode = *mode;
  r.boolean("cold_start", res.cold_start);
  (void)r.at("status");
  (void)r.at("success");
  for (const auto& p : r.at("coarse_path")) {
    if (!p.is_array() || p.size() != 4) r.fail("coarse path point is [x, y, phi, gear]");
    res.coarse_path.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>(),
                               parse_gear(p[3].get<std::string>())});
  }
  {
    Reader w(r.at("warm_start"), r.path("warm_start"), kCode);
    res.warm_start.dt = w.number("dt");
    res.warm_start.states = read_states(w.at("states"));
    res.warm_start.controls = read_controls(w.at("controls"));
    w.finish();
  }
  res.trajectory = parse_solution(r.at("trajectory"));
  for (const auto& g : r.at("gear_partitions")) {
    res.gear_partitions.push_back({parse_gear(g.at("gear").get<std::string>()),
                                   g.at("begin").get<std::size_t>(), g.at("end").get<std::size_t>()});
  }
  res.audit = parse_audit(r.at("audit"));
  {
    Reader t(r.at("timings"), r.path("timings"), kCode);
    PlanTimings& tm = res.timings;
    tm.coarse_search = t.number("coarse_search");
    tm.speed_profile = t.number("speed_profile");
    tm.dual_warm_start = t.number("dual_warm_start");
    tm.mpc = t.number("mpc");
    tm.audit = t.number("audit");
    tm.frame = t.number("frame");
    tm.total = t.number("total");
    t.finish();
  }
  r.finish();
  return res;
}

inline PlanResult parse_result(const std::string& text) {
  try {
    return parse_result(Json::parse(text));
  } catch (const Json::exception& e) {
    detail::fail(ErrorCode::kInvalidArgument, std::string("invalid result JSON: ") + e.what());
  }
}

}  // namespace tdr_obca
