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

#pragma once

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "tdr_obca/common.hpp"

namespace tdr_obca {

/// Rear-axle referenced kinematic state. Heading is never wrapped.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double phi = 0.0;

  bool operator==(const VehicleState&) const = default;
};

struct ControlInput {
  double steering = 0.0;
  double accel = 0.0;

  bool operator==(const ControlInput&) const = default;
};

struct Range {
  double lower = 0.0;
  double upper = 0.0;

  constexpr bool contains(double value, double tol = 0.0) const {
    return value >= lower - tol && value <= upper + tol;
  }
};

/// Box limits on the bicycle model. Defaults describe a mid-size sedan
/// (2.8 m wheelbase) at parking-lot speeds.
struct VehicleLimits {
  Range steering{-0.5, 0.5};       // rad
  Range steering_rate{-0.5, 0.5};  // rad/s
  Range accel{-1.0, 1.0};          // m/s^2
  Range speed{-1.0, 2.0};          // m/s
  double wheelbase = 2.8;          // m

  void validate() const {
    for (const Range* r : {&steering, &steering_rate, &accel, &speed}) {
      if (!(r->lower < r->upper)) {
        detail::fail(ErrorCode::kInvalidArgument, "limit range must satisfy lower < upper");
      }
    }
    if (!(wheelbase > 0.0)) {
      detail::fail(ErrorCode::kInvalidArgument, "wheelbase must be positive");
    }
  }
};

/// One explicit Euler step of the kinematic bicycle model. All right-hand
/// sides use the pre-step state.
inline VehicleState step_dynamics(const VehicleState& s, const ControlInput& u, double dt,
                                  double wheelbase) {
  VehicleState next;
  next.x = s.x + s.v * std::cos(s.phi) * dt;
  next.y = s.y + s.v * std::sin(s.phi) * dt;
  next.phi = s.phi + s.v * std::tan(u.steering) / wheelbase * dt;
  next.v = s.v + u.accel * dt;
  return next;
}

inline std::vector<VehicleState> rollout(const VehicleState& x0,
                                         std::span<const ControlInput> controls, double dt,
                                         double wheelbase) {
  if (controls.empty()) {
    detail::fail(ErrorCode::kInvalidArgument, "rollout needs at least one control");
  }
  std::vector<VehicleState> states;
  states.reserve(controls.size() + 1);
  states.push_back(x0);
  for (const auto& u : controls) {
    states.push_back(step_dynamics(states.back(), u, dt, wheelbase));
  }
  return states;
}

enum class LimitQuantity { kSteering, kSteeringRate, kAccel, kSpeed };

constexpr std::string_view to_string(LimitQuantity q) {
  switch (q) {
    case LimitQuantity::kSteering: return "steering";
    case LimitQuantity::kSteeringRate: return "steering_rate";
    case LimitQuantity::kAccel: return "accel";
    case LimitQuantity::kSpeed: return "speed";
  }
  return "unknown";
}

struct LimitViolation {
  std::size_t index = 0;
  LimitQuantity quantity = LimitQuantity::kSteering;
  double value = 0.0;
};

/// Lists every index where a box limit is exceeded by more than `tol`.
/// Speed is indexed by state, the rest by control. The rate at control k
/// is (steering[k] - steering[k-1]) / dt, so index 0 carries no rate.
inline std::vector<LimitViolation> check_limits(std::span<const VehicleState> states,
                                                std::span<const ControlInput> controls,
                                                const VehicleLimits& limits, double dt,
                                                double tol = 1e-6) {
  if (states.size() != controls.size() + 1) {
    detail::fail(ErrorCode::kDimensionMismatch, "check_limits expects |states| = |controls| + 1");
  }
  std::vector<LimitViolation> out;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const auto& u = controls[k];
    if (!limits.steering.contains(u.steering, tol)) {
      out.push_back({k, LimitQuantity::kSteering, u.steering});
    }
    if (!limits.accel.contains(u.accel, tol)) {
      out.push_back({k, LimitQuantity::kAccel, u.accel});
    }
    if (k > 0) {
      const double rate = (u.steering - controls[k - 1].steering) / dt;
      if (!limits.steering_rate.contains(rate, tol)) {
        out.push_back({k, LimitQuantity::kSteeringRate, rate});
      }
    }
  }
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (!limits.speed.contains(states[k].v, tol)) {
      out.push_back({k, LimitQuantity::kSpeed, states[k].v});
    }
  }
  return out;
}

/// Smallest signed difference a - b folded into (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::remainder(a - b, 2.0 * M_PI);
  if (d <= -M_PI) d += 2.0 * M_PI;
  return d;
}

}  // namespace tdr_obca
