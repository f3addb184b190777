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

// scenario -> Hybrid A* -> gear partition -> speed profiles -> resample ->
// dual warm start -> MPC -> audit and gear partition of the result.

#pragma once

#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tdr_obca/common.hpp"
#include "tdr_obca/dual_warm_start.hpp"
#include "tdr_obca/geometry.hpp"
#include "tdr_obca/grid_search.hpp"
#include "tdr_obca/mpc.hpp"
#include "tdr_obca/speed_profile.hpp"
#include "tdr_obca/vehicle.hpp"

namespace tdr_obca {

struct Scenario {
  std::string name;
  std::vector<ConvexObstacle> obstacles;
  std::vector<std::pair<Point2, Point2>> boundary_segments;
  double boundary_thickness = 0.1;
  VehicleState x0;
  VehicleState x_F;
  VehicleFootprint footprint;
  VehicleLimits limits;

  /// Obstacles followed by one thin rectangle per boundary segment.
  std::vector<ConvexObstacle> all_obstacles() const {
    std::vector<ConvexObstacle> out = obstacles;
    for (const auto& [a, b] : boundary_segments) {
      out.push_back(segment_to_obstacle(a, b, boundary_thickness));
    }
    return out;
  }

  void validate() const {
    footprint.validate();
    limits.validate();
    for (const VehicleState* s : {&x0, &x_F}) {
      if (!std::isfinite(s->x) || !std::isfinite(s->y) || !std::isfinite(s->v) ||
          !std::isfinite(s->phi)) {
        detail::fail(ErrorCode::kInvalidScenario, "start and goal must be finite");
      }
    }
    if (!(boundary_thickness > 0.0)) {
      detail::fail(ErrorCode::kInvalidScenario, "boundary thickness must be positive");
    }
  }
};

/// Settings of the stages between search and MPC.
struct PlanOptions {
  double horizon_ratio = 1.3;
  double jerk_weight = 1.0;
  unsigned dual_threads = 1;
  /// Overrides the mode's initialization: true = naive profile and constant
  /// duals, false = optimized profile and dual warm start.
  std::optional<bool> cold_start;
  /// Speeds with |v| at or below this count as stopped when partitioning.
  double stop_speed = 1e-6;
};

struct GearRange {
  Gear gear = Gear::kForward;
  std::size_t begin = 0;  // state indices, half-open
  std::size_t end = 0;

  bool operator==(const GearRange&) const = default;
};

/// Ranges over state indices by the sign of v. Stopped states join the next
/// moving state's gear (the previous one at the tail, Forward if none moves).
inline std::vector<GearRange> partition_trajectory(std::span<const VehicleState> states,
                                                   double stop_speed = 1e-6) {
  std::vector<GearRange> out;
  const std::size_t n = states.size();
  if (n == 0) return out;
  std::vector<Gear> gear(n, Gear::kForward);
  std::optional<Gear> next;
  for (std::size_t i = n; i-- > 0;) {
    if (states[i].v > stop_speed) {
      next = Gear::kForward;
    } else if (states[i].v < -stop_speed) {
      next = Gear::kReverse;
    }
    if (next) gear[i] = *next;
  }
  // Tail of stopped states after the last moving one.
  std::size_t last = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(states[i].v) > stop_speed) last = i;
  }
  if (last != n) {
    for (std::size_t i = last + 1; i < n; ++i) gear[i] = gear[last];
  }
  std::size_t start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || gear[i] != gear[start]) {
      out.push_back({gear[start], start, i});
      start = i;
    }
  }
  return out;
}

inline std::vector<GearRange> partition_trajectory(const MpcSolution& sol,
                                                   double stop_speed = 1e-6) {
  return partition_trajectory(std::span<const VehicleState>(sol.states), stop_speed);
}

struct PlanTimings {
  double coarse_search = 0.0;
  double speed_profile = 0.0;
  double dual_warm_start = 0.0;
  double mpc = 0.0;
  double audit = 0.0;
  /// Optimization frame: dual warm start + MPC.
  double frame = 0.0;
  double total = 0.0;
};

struct PlanResult {
  MpcMode mode = MpcMode::kTDR;
  bool cold_start = false;
  std::vector<CoarsePathPoint> coarse_path;
  WarmStartTrajectory warm_start;
  MpcSolution trajectory;
  std::vector<GearRange> gear_partitions;
  AuditReport audit;
  PlanTimings timings;

  NlpStatus status() const { return trajectory.report.status; }
  /// Optimal and clean under the independent audit.
  bool success() const { return status() == NlpStatus::kOptimal && audit.passed(); }
};

namespace pipeline_detail {

inline double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Steps per segment in proportion to its minimum traverse time, each with
// enough steps to be traversable at the shared dt.
inline std::vector<int> allocate_steps(const std::vector<double>& t_min, int K, double dt) {
  const std::size_t n = t_min.size();
  const double total = std::accumulate(t_min.begin(), t_min.end(), 0.0);
  std::vector<int> k(n), floor_k(n);
  int used = 0;
  for (std::size_t j = 0; j < n; ++j) {
    floor_k[j] = std::max(2, static_cast<int>(std::ceil(1.05 * t_min[j] / dt)));
    k[j] = std::max(floor_k[j], static_cast<int>(std::lround(K * t_min[j] / total)));
    used += k[j];
  }
  // Add steps where time per step is largest, remove where it is smallest.
  while (used < K) {
    std::size_t pick = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (t_min[j] / k[j] > t_min[pick] / k[pick]) pick = j;
    }
    ++k[pick];
    ++used;
  }
  while (used > K) {
    std::size_t pick = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (k[j] > floor_k[j] && (pick == n || t_min[j] / k[j] < t_min[pick] / k[pick])) pick = j;
    }
    if (pick == n) return {};
    --k[pick];
    --used;
  }
  return k;
}

[[noreturn]] inline void rethrow_staged(ErrorCode stage, const PlannerError& e) {
  detail::fail(stage, e.what());
}

}  // namespace pipeline_detail

/// Runs every stage. Stage failures before the MPC throw PlannerError with
/// the stage's code; a non-optimal MPC is reported through the result.
inline PlanResult plan(const Scenario& scenario, const GridConfig& grid_config,
                       const MpcConfig& mpc_config, const PlanOptions& options = {}) {
  using pipeline_detail::seconds_since;
  using Clock = std::chrono::steady_clock;
  scenario.validate();
  mpc_config.validate();
  const auto t_start = Clock::now();

  PlanResult result;
  result.mode = mpc_config.mode;
  result.cold_start = options.cold_start.value_or(mpc_config.mode == MpcMode::kBase);
  const std::vector<ConvexObstacle> obstacles = scenario.all_obstacles();
  const VehicleLimits& lim = scenario.limits;
  const int K = static_cast<int>(mpc_config.K);

  // Coarse search.
  auto t = Clock::now();
  std::vector<GearSegment> segments;
  try {
    result.coarse_path = plan_coarse_path(obstacles, scenario.footprint, scenario.x0,
                                          scenario.x_F, lim, grid_config);
    for (auto& seg : partition_by_gear(result.coarse_path)) {
      if (segment_length(seg) > 1e-9) segments.push_back(std::move(seg));
    }
    if (segments.empty()) detail::fail(ErrorCode::kEmptyPath, "start and goal coincide");
  } catch (const PlannerError& e) {
    pipeline_detail::rethrow_staged(ErrorCode::kCoarseSearchFailed, e);
  }
  result.timings.coarse_search = seconds_since(t);

  // Speed profiles on a shared time grid.
  t = Clock::now();
  try {
    std::vector<double> lengths, t_min;
    const double a_max = gear_accel_limit(lim);
    for (const auto& seg : segments) {
      lengths.push_back(segment_length(seg));
      t_min.push_back(min_traverse_time(lengths.back(), gear_speed_limit(lim, seg.gear), a_max));
    }
    const double s_total = std::accumulate(lengths.begin(), lengths.end(), 0.0);
    const double t_sum = std::accumulate(t_min.begin(), t_min.end(), 0.0);
    double T = std::max(
        compute_horizon({options.horizon_ratio, gear_speed_limit(lim, Gear::kForward), a_max,
                         s_total}),
        options.horizon_ratio * t_sum);
    std::vector<SpeedProfile> profiles;
    for (int attempt = 0;; ++attempt) {
      const double dt = T / K;
      const std::vector<int> steps = pipeline_detail::allocate_steps(t_min, K, dt);
      if (steps.empty()) {
        detail::fail(ErrorCode::kInfeasibleProfile, "too many gear segments for K steps");
      }
      profiles.clear();
      try {
        for (std::size_t j = 0; j < segments.size(); ++j) {
          const double Tj = steps[j] * dt;
          profiles.push_back(result.cold_start
                                 ? naive_speed_profile(lengths[j], lim, steps[j], Tj,
                                                       segments[j].gear)
                                 : optimize_speed_profile(lengths[j], lim, steps[j], Tj,
                                                          segments[j].gear, options.jerk_weight));
        }
        break;
      } catch (const PlannerError& e) {
        if (e.code() != ErrorCode::kInfeasibleProfile || attempt >= 4) throw;
        T *= 1.15;
      }
    }
    result.warm_start = resample_warm_start(segments, profiles, K, lim);
  } catch (const PlannerError& e) {
    pipeline_detail::rethrow_staged(ErrorCode::kProfileFailed, e);
  }
  result.timings.speed_profile = seconds_since(t);

  // Dual warm start on the warm states 1..K.
  t = Clock::now();
  DualWarmStart duals;
  const WarmStartTrajectory& warm = result.warm_start;
  try {
    const std::vector<VehicleState> tail(warm.states.begin() + 1, warm.states.end());
    if (obstacles.empty()) {
      duals.resize(obstacles, static_cast<std::size_t>(K));
    } else if (result.cold_start) {
      duals = constant_duals(warm.states, obstacles, scenario.footprint);
    } else {
      const RelaxedDualQp qp =
          build_relaxed_dual_qp(tail, obstacles, scenario.footprint, mpc_config.beta);
      duals = scale_to_feasible(solve_dual_warm_start(qp, options.dual_threads), obstacles);
    }
  } catch (const PlannerError& e) {
    pipeline_detail::rethrow_staged(ErrorCode::kDualWarmStartFailed, e);
  }
  result.timings.dual_warm_start = seconds_since(t);

  // MPC.
  t = Clock::now();
  try {
    const MpcProblem nlp = build_mpc(scenario.x0, scenario.x_F, warm, &duals, obstacles,
                                     scenario.footprint, lim, mpc_config);
    result.trajectory = solve_mpc(nlp, mpc_config);
  } catch (const PlannerError& e) {
    pipeline_detail::rethrow_staged(ErrorCode::kMpcFailed, e);
  }
  result.timings.mpc = seconds_since(t);

  t = Clock::now();
  result.audit = verify_solution(result.trajectory, obstacles, scenario.footprint, lim,
                                 result.trajectory.dt);
  result.gear_partitions = partition_trajectory(result.trajectory, options.stop_speed);
  result.timings.audit = seconds_since(t);
  result.timings.frame = result.timings.dual_warm_start + result.timings.mpc;
  result.timings.total = seconds_since(t_start);
  return result;
}

}  // namespace tdr_obca
