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

// Hybrid A* over (x, y, heading) with constant-curvature motion primitives,
// a holonomic-with-obstacles grid heuristic and Reeds-Shepp analytic
// expansion.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "tdr_obca/common.hpp"
#include "tdr_obca/geometry.hpp"
#include "tdr_obca/reeds_shepp.hpp"
#include "tdr_obca/vehicle.hpp"

namespace tdr_obca {

enum class Gear { kForward, kReverse };

inline const char* to_string(Gear g) { return g == Gear::kForward ? "forward" : "reverse"; }

struct CoarsePathPoint {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;
  Gear gear = Gear::kForward;

  bool operator==(const CoarsePathPoint&) const = default;
};

struct GridConfig {
  double xy_resolution = 0.3;
  double phi_resolution = 5.0 * M_PI / 180.0;
  double primitive_arc = 0.5;
  int steering_samples = 7;
  double reverse_penalty = 1.5;
  double gear_switch_penalty = 3.0;
  bool analytic_expansion = true;
  // Extra clearance required from every obstacle while searching.
  double collision_margin = 0.1;
  double steering_change_penalty = 0.2;
  // Spacing of collision-checked poses along primitives and RS curves.
  double sample_step = 0.1;
  // Search area = bounding box of obstacles, start and goal, grown by this.
  double bounds_margin = 5.0;
  std::size_t max_expansions = 200000;
  int analytic_interval = 3;

  void validate() const {
    if (!(xy_resolution > 0) || !(phi_resolution > 0) || !(primitive_arc > 0) ||
        !(sample_step > 0)) {
      detail::fail(ErrorCode::kInvalidArgument, "grid resolutions must be positive");
    }
    if (steering_samples < 3 || steering_samples % 2 == 0) {
      detail::fail(ErrorCode::kInvalidArgument, "steering_samples must be odd and >= 3");
    }
    if (reverse_penalty < 1.0 || gear_switch_penalty < 0 || collision_margin < 0 ||
        steering_change_penalty < 0 || bounds_margin < 0 || analytic_interval < 1) {
      detail::fail(ErrorCode::kInvalidArgument, "invalid grid penalties");
    }
  }
};

struct GearSegment {
  Gear gear = Gear::kForward;
  std::vector<CoarsePathPoint> points;
};

namespace grid_detail {

class CollisionChecker {
 public:
  CollisionChecker(std::span<const ConvexObstacle> obstacles, const VehicleFootprint& fp,
                   double margin)
      : obstacles_(obstacles), fp_(fp), margin_(margin) {
    const double half_l = std::max(fp.rear_axle_to_center + fp.length / 2,
                                   fp.length / 2 - fp.rear_axle_to_center);
    reach_ = std::hypot(half_l, fp.width / 2);
    for (const auto& o : obstacles) {
      Point2 c = Point2::Zero();
      for (const auto& v : o.vertices()) c += v;
      c /= static_cast<double>(o.vertices().size());
      double r = 0.0;
      for (const auto& v : o.vertices()) r = std::max(r, (v - c).norm());
      centers_.push_back(c);
      radii_.push_back(r);
    }
  }

  // True if the footprint at the pose is closer than `margin` to an obstacle.
  bool collides(double x, double y, double phi, double margin) const {
    const VehicleState s{x, y, 0.0, phi};
    std::vector<Point2> body;
    for (std::size_t m = 0; m < obstacles_.size(); ++m) {
      if ((centers_[m] - Point2(x, y)).norm() > reach_ + radii_[m] + margin) continue;
      if (body.empty()) body = fp_.vertices_at(s);
      const std::span<const Point2> ob(obstacles_[m].vertices());
      if (margin <= 0.0) {
        if (polygons_intersect(body, ob) && overlap_depth(body, ob) > 0.0) return true;
      } else if (polygon_distance(body, ob) < margin) {
        return true;
      }
    }
    return false;
  }
  bool collides(double x, double y, double phi) const { return collides(x, y, phi, margin_); }

 private:
  std::span<const ConvexObstacle> obstacles_;
  VehicleFootprint fp_;
  double margin_;
  double reach_ = 0.0;
  std::vector<Point2> centers_;
  std::vector<double> radii_;
};

struct Bounds {
  double x_min, x_max, y_min, y_max;
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

// Obstacle-aware 8-connected distance field to the goal for a point robot.
class HolonomicHeuristic {
 public:
  HolonomicHeuristic(std::span<const ConvexObstacle> obstacles, const Bounds& b, double res,
                     double gx, double gy)
      : b_(b), res_(res) {
    nx_ = static_cast<int>(std::ceil((b.x_max - b.x_min) / res)) + 1;
    ny_ = static_cast<int>(std::ceil((b.y_max - b.y_min) / res)) + 1;
    std::vector<char> blocked(static_cast<std::size_t>(nx_) * ny_, 0);
    for (const auto& o : obstacles) {
      double ox0 = std::numeric_limits<double>::infinity(), ox1 = -ox0, oy0 = ox0, oy1 = -ox0;
      for (const auto& v : o.vertices()) {
        ox0 = std::min(ox0, v.x());
        ox1 = std::max(ox1, v.x());
        oy0 = std::min(oy0, v.y());
        oy1 = std::max(oy1, v.y());
      }
      const int i0 = std::max(0, cell_x(ox0) - 1), i1 = std::min(nx_ - 1, cell_x(ox1) + 1);
      const int j0 = std::max(0, cell_y(oy0) - 1), j1 = std::min(ny_ - 1, cell_y(oy1) + 1);
      for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) {
          const double cx = b.x_min + (i + 0.5) * res, cy = b.y_min + (j + 0.5) * res;
          const double h = 0.5 * res;
          const std::array<Point2, 4> cell{Point2(cx - h, cy - h), Point2(cx + h, cy - h),
                                           Point2(cx + h, cy + h), Point2(cx - h, cy + h)};
          if (polygons_intersect(cell, o.vertices())) blocked[index(i, j)] = 1;
        }
      }
    }
    dist_.assign(blocked.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    const int g = index(clamp_x(cell_x(gx)), clamp_y(cell_y(gy)));
    blocked[g] = 0;
    dist_[g] = 0.0;
    open.push({0.0, g});
    while (!open.empty()) {
      const auto [d, c] = open.top();
      open.pop();
      if (d > dist_[c]) continue;
      const int ci = c / ny_, cj = c % ny_;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ni = ci + di, nj = cj + dj;
          if (ni < 0 || nj < 0 || ni >= nx_ || nj >= ny_) continue;
          const int n = index(ni, nj);
          if (blocked[n]) continue;
          const double nd = d + res * ((di != 0 && dj != 0) ? M_SQRT2 : 1.0);
          if (nd < dist_[n]) {
            dist_[n] = nd;
            open.push({nd, n});
          }
        }
      }
    }
  }

  double operator()(double x, double y) const {
    return dist_[index(clamp_x(cell_x(x)), clamp_y(cell_y(y)))];
  }

 private:
  int cell_x(double x) const { return static_cast<int>(std::floor((x - b_.x_min) / res_)); }
  int cell_y(double y) const { return static_cast<int>(std::floor((y - b_.y_min) / res_)); }
  int clamp_x(int i) const { return std::clamp(i, 0, nx_ - 1); }
  int clamp_y(int j) const { return std::clamp(j, 0, ny_ - 1); }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * ny_ + j; }

  Bounds b_;
  double res_;
  int nx_ = 0, ny_ = 0;
  std::vector<double> dist_;
};

struct Pose {
  double x, y, phi;
};

// Exact constant-curvature motion of the rear axle by signed arc length s.
inline Pose arc_move(const Pose& p, double curvature, double s) {
  if (std::abs(curvature) < 1e-12) {
    return {p.x + s * std::cos(p.phi), p.y + s * std::sin(p.phi), p.phi};
  }
  const double phi1 = p.phi + curvature * s;
  const double r = 1.0 / curvature;
  return {p.x + r * (std::sin(phi1) - std::sin(p.phi)),
          p.y - r * (std::cos(phi1) - std::cos(p.phi)), phi1};
}

struct Node {
  Pose pose;
  double g = 0.0;
  std::int64_t parent = -1;
  Gear gear = Gear::kForward;
  double steering = 0.0;
  std::vector<Pose> trace;  // poses after leaving the parent, ending at `pose`
  bool closed = false;
};

}  // namespace grid_detail

/// Hybrid A* from x0 to xF. The returned path starts exactly at the x0 pose;
/// at every gear change the cusp pose is repeated with the new gear.
inline std::vector<CoarsePathPoint> plan_coarse_path(std::span<const ConvexObstacle> obstacles,
                                                     const VehicleFootprint& footprint,
                                                     const VehicleState& x0,
                                                     const VehicleState& xF,
                                                     const VehicleLimits& limits,
                                                     const GridConfig& config = {}) {
  using namespace grid_detail;
  config.validate();
  limits.validate();
  footprint.validate();

  const CollisionChecker checker(obstacles, footprint, config.collision_margin);
  if (checker.collides(x0.x, x0.y, x0.phi, 0.0)) {
    detail::fail(ErrorCode::kStartInCollision, "start pose collides with an obstacle");
  }
  if (checker.collides(xF.x, xF.y, xF.phi, 0.0)) {
    detail::fail(ErrorCode::kGoalInCollision, "goal pose collides with an obstacle");
  }

  Bounds bounds{std::min(x0.x, xF.x), std::max(x0.x, xF.x), std::min(x0.y, xF.y),
                std::max(x0.y, xF.y)};
  for (const auto& o : obstacles) {
    for (const auto& v : o.vertices()) {
      bounds.x_min = std::min(bounds.x_min, v.x());
      bounds.x_max = std::max(bounds.x_max, v.x());
      bounds.y_min = std::min(bounds.y_min, v.y());
      bounds.y_max = std::max(bounds.y_max, v.y());
    }
  }
  bounds.x_min -= config.bounds_margin;
  bounds.x_max += config.bounds_margin;
  bounds.y_min -= config.bounds_margin;
  bounds.y_max += config.bounds_margin;

  const HolonomicHeuristic h2d(obstacles, bounds, config.xy_resolution, xF.x, xF.y);
  if (!std::isfinite(h2d(x0.x, x0.y))) {
    detail::fail(ErrorCode::kNoPathFound, "goal is not reachable from the start");
  }

  const double max_curvature = std::tan(limits.steering.upper) / limits.wheelbase;
  const double min_curvature = std::tan(limits.steering.lower) / limits.wheelbase;
  const double turn_radius = 1.0 / std::min(max_curvature, -min_curvature);
  const reeds_shepp::Pose goal_rs{xF.x, xF.y, xF.phi};

  auto heuristic = [&](const Pose& p) {
    return std::max(h2d(p.x, p.y),
                    reeds_shepp::distance({p.x, p.y, p.phi}, goal_rs, turn_radius));
  };
  auto free_pose = [&](const Pose& p) {
    return bounds.contains(p.x, p.y) && !checker.collides(p.x, p.y, p.phi);
  };

  const int nphi = static_cast<int>(std::ceil(2.0 * M_PI / config.phi_resolution));
  auto key_of = [&](const Pose& p) {
    const auto ix = static_cast<std::int64_t>(std::floor((p.x - bounds.x_min) / config.xy_resolution));
    const auto iy = static_cast<std::int64_t>(std::floor((p.y - bounds.y_min) / config.xy_resolution));
    double a = std::fmod(p.phi, 2.0 * M_PI);
    if (a < 0) a += 2.0 * M_PI;
    const auto ip = std::min<std::int64_t>(nphi - 1, static_cast<std::int64_t>(a / config.phi_resolution));
    return (ix * 100003 + iy) * 1024 + ip;
  };
  auto at_goal = [&](const Pose& p) {
    return std::abs(p.x - xF.x) <= config.xy_resolution &&
           std::abs(p.y - xF.y) <= config.xy_resolution &&
           std::abs(angle_diff(p.phi, xF.phi)) <= config.phi_resolution;
  };

  std::vector<Node> nodes;
  std::unordered_map<std::int64_t, std::size_t> by_key;
  // (f, h, insertion counter, node index)
  using Entry = std::tuple<double, double, std::uint64_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::uint64_t counter = 0;

  const Pose start{x0.x, x0.y, x0.phi};
  nodes.push_back({start, 0.0, -1, Gear::kForward, 0.0, {}, false});
  by_key[key_of(start)] = 0;
  {
    const double h = heuristic(start);
    open.push({h, h, counter++, 0});
  }

  std::vector<double> steerings;
  for (int i = 0; i < config.steering_samples; ++i) {
    steerings.push_back(limits.steering.lower + (limits.steering.upper - limits.steering.lower) *
                                                    i / (config.steering_samples - 1));
  }
  const int substeps =
      std::max(1, static_cast<int>(std::ceil(config.primitive_arc / config.sample_step)));

  auto reconstruct = [&](std::size_t last) {
    std::vector<std::size_t> chain;
    for (std::int64_t i = static_cast<std::int64_t>(last); i >= 0; i = nodes[i].parent) {
      chain.push_back(static_cast<std::size_t>(i));
    }
    std::reverse(chain.begin(), chain.end());
    std::vector<CoarsePathPoint> path;
    const Gear first = chain.size() > 1 ? nodes[chain[1]].gear : Gear::kForward;
    path.push_back({start.x, start.y, start.phi, first});
    for (std::size_t c = 1; c < chain.size(); ++c) {
      const Node& n = nodes[chain[c]];
      if (n.gear != path.back().gear) {
        CoarsePathPoint cusp = path.back();
        cusp.gear = n.gear;
        path.push_back(cusp);
      }
      for (const auto& p : n.trace) path.push_back({p.x, p.y, p.phi, n.gear});
    }
    return path;
  };

  std::size_t expansions = 0;
  while (!open.empty()) {
    const auto [f, h, ctr, idx] = open.top();
    open.pop();
    (void)ctr;
    if (nodes[idx].closed) continue;
    if (f > nodes[idx].g + h + 1e-9) continue;  // stale entry
    nodes[idx].closed = true;
    const Pose cur = nodes[idx].pose;

    if (at_goal(cur)) return reconstruct(idx);

    if (config.analytic_expansion && expansions % config.analytic_interval == 0) {
      const reeds_shepp::Pose from{cur.x, cur.y, cur.phi};
      const auto rs = reeds_shepp::shortest_path(from, goal_rs, turn_radius);
      if (rs.valid()) {
        const auto samples = reeds_shepp::sample(from, rs, config.sample_step);
        bool ok = true;
        for (const auto& s : samples) {
          if (!free_pose({s.pose.x, s.pose.y, s.pose.phi})) {
            ok = false;
            break;
          }
        }
        if (ok) {
          auto path = reconstruct(idx);
          if (idx == 0 && !samples.empty()) {
            path.front().gear = samples.front().forward ? Gear::kForward : Gear::kReverse;
          }
          for (std::size_t i = 1; i < samples.size(); ++i) {
            const auto& s = samples[i];
            const Gear gear = s.forward ? Gear::kForward : Gear::kReverse;
            if (gear != path.back().gear) {
              CoarsePathPoint cusp = path.back();
              cusp.gear = gear;
              path.push_back(cusp);
            }
            // Samples repeat the cusp pose themselves; skip exact duplicates.
            const auto& b = path.back();
            if (b.x == s.pose.x && b.y == s.pose.y && b.phi == s.pose.phi) continue;
            path.push_back({s.pose.x, s.pose.y, s.pose.phi, gear});
          }
          return path;
        }
      }
    }

    if (++expansions > config.max_expansions) break;

    for (const Gear gear : {Gear::kForward, Gear::kReverse}) {
      const double sign = gear == Gear::kForward ? 1.0 : -1.0;
      for (const double delta : steerings) {
        const double kappa = std::tan(delta) / limits.wheelbase;
        std::vector<Pose> trace;
        trace.reserve(substeps);
        bool ok = true;
        for (int k = 1; k <= substeps; ++k) {
          const Pose p = arc_move(cur, kappa, sign * config.primitive_arc * k / substeps);
          if (!free_pose(p)) {
            ok = false;
            break;
          }
          trace.push_back(p);
        }
        if (!ok) continue;
        const Pose next = trace.back();
        double g = nodes[idx].g + config.primitive_arc *
                                      (gear == Gear::kReverse ? config.reverse_penalty : 1.0);
        if (idx != 0 && gear != nodes[idx].gear) g += config.gear_switch_penalty;
        if (idx != 0) g += config.steering_change_penalty * std::abs(delta - nodes[idx].steering);
        const auto key = key_of(next);
        const auto it = by_key.find(key);
        std::size_t target;
        if (it == by_key.end()) {
          target = nodes.size();
          nodes.push_back({next, g, static_cast<std::int64_t>(idx), gear, delta, std::move(trace),
                           false});
          by_key.emplace(key, target);
        } else {
          target = it->second;
          Node& n = nodes[target];
          if (n.closed || g >= n.g) continue;
          n = {next, g, static_cast<std::int64_t>(idx), gear, delta, std::move(trace), false};
        }
        const double hn = heuristic(next);
        open.push({g + hn, hn, counter++, target});
      }
    }
  }
  detail::fail(ErrorCode::kNoPathFound, "hybrid A* exhausted its search without reaching the goal");
}

inline std::vector<CoarsePathPoint> plan_coarse_path(
    const std::vector<ConvexObstacle>& obstacles, const VehicleFootprint& footprint,
    const VehicleState& x0, const VehicleState& xF, const VehicleLimits& limits,
    const GridConfig& config = {}) {
  return plan_coarse_path(std::span<const ConvexObstacle>(obstacles), footprint, x0, xF, limits,
                          config);
}

/// Run-length partition of the path by gear.
inline std::vector<GearSegment> partition_by_gear(std::span<const CoarsePathPoint> path) {
  if (path.empty()) detail::fail(ErrorCode::kEmptyPath, "cannot partition an empty path");
  std::vector<GearSegment> segments;
  for (const auto& p : path) {
    if (segments.empty() || segments.back().gear != p.gear) segments.push_back({p.gear, {}});
    segments.back().points.push_back(p);
  }
  return segments;
}

inline std::vector<GearSegment> partition_by_gear(const std::vector<CoarsePathPoint>& path) {
  return partition_by_gear(std::span<const CoarsePathPoint>(path));
}

}  // namespace tdr_obca
