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

// Longitudinal profiles along gear segments and the time-gridded warm start
// built from them.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "tdr_obca/common.hpp"
#include "tdr_obca/grid_search.hpp"
#include "tdr_obca/nlp_solver.hpp"
#include "tdr_obca/qp_solver.hpp"
#include "tdr_obca/vehicle.hpp"

namespace tdr_obca {

struct HorizonParams {
  double r = 1.2;
  double v_max = 2.0;
  double a_max = 1.0;
  double s_total = 0.0;
};

/// T = r (v_max^2 + s a_max) / (a_max v_max).
inline double compute_horizon(const HorizonParams& p) {
  if (!(p.r > 0) || !(p.v_max > 0) || !(p.a_max > 0) || !(p.s_total > 0)) {
    detail::fail(ErrorCode::kNonPositiveInput, "horizon parameters must be positive");
  }
  return p.r * (p.v_max * p.v_max + p.s_total * p.a_max) / (p.a_max * p.v_max);
}

/// Shortest rest-to-rest traverse time under speed and acceleration caps.
inline double min_traverse_time(double length, double v_max, double a_max) {
  if (length <= 0) return 0.0;
  if (length >= v_max * v_max / a_max) return v_max / a_max + length / v_max;
  return 2.0 * std::sqrt(length / a_max);
}

struct SpeedProfile {
  double dt = 0.0;
  std::vector<double> s;  // K + 1
  std::vector<double> v;  // K + 1
  std::vector<double> a;  // K
  QpReport report;

  int steps() const { return static_cast<int>(a.size()); }
};

/// Speed and acceleration caps that apply while driving in `gear`.
inline double gear_speed_limit(const VehicleLimits& limits, Gear gear) {
  return gear == Gear::kForward ? limits.speed.upper : -limits.speed.lower;
}
inline double gear_accel_limit(const VehicleLimits& limits) {
  return std::min(limits.accel.upper, -limits.accel.lower);
}

/// Sum of a^2 plus jerk_weight * sum of ((a[i+1] - a[i]) / dt)^2.
inline double profile_cost(const SpeedProfile& p, double jerk_weight = 1.0) {
  double c = 0.0;
  for (double a : p.a) c += a * a;
  for (std::size_t i = 0; i + 1 < p.a.size(); ++i) {
    const double j = (p.a[i + 1] - p.a[i]) / p.dt;
    c += jerk_weight * j * j;
  }
  return c;
}

/// QP over (s, v, a) with exact constant-acceleration recurrences,
/// rest-to-rest boundary conditions and speed/acceleration boxes.
inline SpeedProfile optimize_speed_profile(double segment_length, const VehicleLimits& limits,
                                           int K, double T, Gear gear = Gear::kForward,
                                           double jerk_weight = 1.0) {
  if (!(segment_length > 0) || K < 1 || !(T > 0)) {
    detail::fail(ErrorCode::kNonPositiveInput, "segment length, steps and horizon must be positive");
  }
  const double v_max = gear_speed_limit(limits, gear);
  const double a_max = gear_accel_limit(limits);
  if (!(v_max > 0) || !(a_max > 0)) {
    detail::fail(ErrorCode::kInvalidArgument, "limits leave no admissible motion");
  }
  if (T < min_traverse_time(segment_length, v_max, a_max) * (1.0 - 1e-12)) {
    detail::fail(ErrorCode::kInfeasibleProfile, "horizon is shorter than the minimum traverse time");
  }
  const double dt = T / K;
  const int n = 3 * K + 2;
  auto S = [](int i) { return i; };
  auto V = [K](int i) { return K + 1 + i; };
  auto A = [K](int i) { return 2 * (K + 1) + i; };

  std::vector<Eigen::Triplet<double>> pt;
  for (int i = 0; i < K; ++i) pt.emplace_back(A(i), A(i), 2.0);
  const double wj = 2.0 * jerk_weight / (dt * dt);
  for (int i = 0; i + 1 < K; ++i) {
    pt.emplace_back(A(i), A(i), wj);
    pt.emplace_back(A(i + 1), A(i + 1), wj);
    pt.emplace_back(A(i), A(i + 1), -wj);
    pt.emplace_back(A(i + 1), A(i), -wj);
  }
  QuadraticProgram qp;
  qp.P.resize(n, n);
  qp.P.setFromTriplets(pt.begin(), pt.end());
  qp.q = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> et;
  std::vector<double> rhs;
  auto eq_row = [&](std::initializer_list<std::pair<int, double>> terms, double b) {
    const int row = static_cast<int>(rhs.size());
    for (const auto& [col, val] : terms) et.emplace_back(row, col, val);
    rhs.push_back(b);
  };
  eq_row({{S(0), 1.0}}, 0.0);
  eq_row({{V(0), 1.0}}, 0.0);
  eq_row({{S(K), 1.0}}, segment_length);
  eq_row({{V(K), 1.0}}, 0.0);
  for (int i = 0; i < K; ++i) {
    eq_row({{S(i + 1), 1.0}, {S(i), -1.0}, {V(i), -dt}, {A(i), -0.5 * dt * dt}}, 0.0);
    eq_row({{V(i + 1), 1.0}, {V(i), -1.0}, {A(i), -dt}}, 0.0);
  }
  qp.A_eq.resize(static_cast<Eigen::Index>(rhs.size()), n);
  qp.A_eq.setFromTriplets(et.begin(), et.end());
  qp.b_eq = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));

  // Speed boxes on interior knots only; the end speeds are pinned above.
  const int m = (K - 1) + K;
  std::vector<Eigen::Triplet<double>> it;
  qp.lower.resize(m);
  qp.upper.resize(m);
  for (int i = 1; i < K; ++i) {
    it.emplace_back(i - 1, V(i), 1.0);
    qp.lower[i - 1] = 0.0;
    qp.upper[i - 1] = v_max;
  }
  for (int i = 0; i < K; ++i) {
    it.emplace_back(K - 1 + i, A(i), 1.0);
    qp.lower[K - 1 + i] = -a_max;
    qp.upper[K - 1 + i] = a_max;
  }
  qp.A_in.resize(m, n);
  qp.A_in.setFromTriplets(it.begin(), it.end());

  NlpSettings st;
  st.tol = 1e-9;
  st.constr_viol_tol = 1e-10;
  st.compl_tol = 1e-9;
  st.max_iter = 200;
  const QpResult r = solve_qp_interior_point(qp, st);
  if (r.report.status == QpStatus::kInfeasible) {
    detail::fail(ErrorCode::kInfeasibleProfile, "no profile satisfies the discrete limits");
  }
  if (r.report.status != QpStatus::kOptimal) {
    detail::fail(ErrorCode::kSolverFailure, "speed profile QP did not converge");
  }
  SpeedProfile p;
  p.dt = dt;
  p.report = r.report;
  for (int i = 0; i <= K; ++i) {
    p.s.push_back(r.x[S(i)]);
    p.v.push_back(std::clamp(r.x[V(i)], 0.0, v_max));
  }
  for (int i = 0; i < K; ++i) p.a.push_back(std::clamp(r.x[A(i)], -a_max, a_max));
  return p;
}

/// Profile from differentiating uniformly spaced path points: central
/// differences of s over the time grid, clipped to the limits.
inline SpeedProfile naive_speed_profile(double segment_length, const VehicleLimits& limits, int K,
                                        double T, Gear gear = Gear::kForward) {
  if (!(segment_length > 0) || K < 1 || !(T > 0)) {
    detail::fail(ErrorCode::kNonPositiveInput, "segment length, steps and horizon must be positive");
  }
  const double v_max = gear_speed_limit(limits, gear);
  const double a_max = gear_accel_limit(limits);
  SpeedProfile p;
  p.dt = T / K;
  for (int i = 0; i <= K; ++i) p.s.push_back(segment_length * i / K);
  p.v.assign(K + 1, 0.0);
  // The vehicle is at rest at both ends of a segment.
  for (int i = 1; i < K; ++i) {
    p.v[i] = std::clamp((p.s[i + 1] - p.s[i - 1]) / (2.0 * p.dt), 0.0, v_max);
  }
  for (int i = 0; i < K; ++i) p.a.push_back(std::clamp((p.v[i + 1] - p.v[i]) / p.dt, -a_max, a_max));
  p.report.status = QpStatus::kOptimal;
  return p;
}

inline double segment_length(const GearSegment& seg) {
  double len = 0.0;
  for (std::size_t i = 1; i < seg.points.size(); ++i) {
    len += std::hypot(seg.points[i].x - seg.points[i - 1].x, seg.points[i].y - seg.points[i - 1].y);
  }
  return len;
}

struct WarmStartTrajectory {
  double dt = 0.0;
  std::vector<VehicleState> states;    // K + 1
  std::vector<ControlInput> controls;  // K
};

namespace profile_detail {

// Arc-length parameterized polyline with linear interpolation of the pose.
class Polyline {
 public:
  explicit Polyline(const GearSegment& seg) : pts_(seg.points) {
    cum_.push_back(0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) {
      cum_.push_back(cum_.back() +
                     std::hypot(pts_[i].x - pts_[i - 1].x, pts_[i].y - pts_[i - 1].y));
    }
  }
  double length() const { return cum_.back(); }

  CoarsePathPoint at(double s) const {
    if (pts_.size() == 1 || s <= 0.0) return pts_.front();
    if (s >= length()) return pts_.back();
    const auto hi = std::upper_bound(cum_.begin(), cum_.end(), s);
    const std::size_t j = static_cast<std::size_t>(hi - cum_.begin());
    const std::size_t i = j - 1;
    const double span = cum_[j] - cum_[i];
    const double t = span > 0 ? (s - cum_[i]) / span : 0.0;
    CoarsePathPoint p = pts_[i];
    p.x += t * (pts_[j].x - pts_[i].x);
    p.y += t * (pts_[j].y - pts_[i].y);
    p.phi += t * (pts_[j].phi - pts_[i].phi);
    return p;
  }

  // Heading change per unit arc length on the polyline edge containing s.
  double curvature_at(double s) const {
    if (pts_.size() < 2) return 0.0;
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(cum_.begin(), cum_.end(), std::clamp(s, 0.0, length())) - cum_.begin());
    i = std::clamp<std::size_t>(i, 1, pts_.size() - 1);
    while (i + 1 < pts_.size() && cum_[i] - cum_[i - 1] <= 1e-12) ++i;
    const double span = cum_[i] - cum_[i - 1];
    return span > 1e-12 ? (pts_[i].phi - pts_[i - 1].phi) / span : 0.0;
  }

 private:
  std::vector<CoarsePathPoint> pts_;
  std::vector<double> cum_;
};

}  // namespace profile_detail

/// Samples every segment at its profile's arc lengths and stitches the
/// segments on a uniform time grid. Speeds carry the gear sign and steering
/// comes from the discrete path curvature. Steps beyond the profiles hold the
/// final pose at rest.
inline WarmStartTrajectory resample_warm_start(std::span<const GearSegment> segments,
                                               std::span<const SpeedProfile> profiles, int K,
                                               const VehicleLimits& limits) {
  if (segments.empty() || segments.size() != profiles.size()) {
    detail::fail(ErrorCode::kMismatchedSegments, "need exactly one profile per gear segment");
  }
  int total = 0;
  for (const auto& p : profiles) total += p.steps();
  if (K < total) {
    detail::fail(ErrorCode::kMismatchedSegments, "K is smaller than the total profile steps");
  }
  const double dt = profiles.front().dt;
  for (const auto& p : profiles) {
    if (std::abs(p.dt - dt) > 1e-9 * std::max(1.0, dt)) {
      detail::fail(ErrorCode::kMismatchedSegments, "profiles must share one time step");
    }
  }

  WarmStartTrajectory w;
  w.dt = dt;
  for (std::size_t j = 0; j < segments.size(); ++j) {
    const profile_detail::Polyline line(segments[j]);
    const SpeedProfile& prof = profiles[j];
    const double sign = segments[j].gear == Gear::kForward ? 1.0 : -1.0;
    const double scale = prof.s.back() > 0 ? line.length() / prof.s.back() : 0.0;
    for (int i = (j == 0 ? 0 : 1); i <= prof.steps(); ++i) {
      const auto p = line.at(prof.s[i] * scale);
      w.states.push_back({p.x, p.y, sign * prof.v[i], p.phi});
    }
    for (int i = 0; i < prof.steps(); ++i) {
      const double s0 = prof.s[i] * scale, s1 = prof.s[i + 1] * scale;
      double kappa;
      if (s1 - s0 > 1e-9) {
        kappa = (line.at(s1).phi - line.at(s0).phi) / (s1 - s0);
      } else {
        kappa = line.curvature_at(s0);
      }
      const double delta = std::clamp(std::atan(limits.wheelbase * sign * kappa),
                                      limits.steering.lower, limits.steering.upper);
      w.controls.push_back({delta, sign * prof.a[i]});
    }
  }
  while (static_cast<int>(w.controls.size()) < K) {
    VehicleState last = w.states.back();
    last.v = 0.0;
    w.states.push_back(last);
    w.controls.push_back({0.0, 0.0});
  }
  return w;
}

inline WarmStartTrajectory resample_warm_start(const std::vector<GearSegment>& segments,
                                               const std::vector<SpeedProfile>& profiles, int K,
                                               const VehicleLimits& limits) {
  return resample_warm_start(std::span<const GearSegment>(segments),
                             std::span<const SpeedProfile>(profiles), K, limits);
}

}  // namespace tdr_obca
