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

// Shortest Reeds-Shepp curves between two poses for a car with a minimum
// turning radius. The word enumeration and the closed-form solutions follow
// the classic formulation (families CSC, CCC, CCCC, CCSC, CCSCC with their
// time-flip / reflection / backwards symmetries), as in OMPL.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace tdr_obca::reeds_shepp {

enum class Turn { kLeft, kStraight, kRight, kNone };

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;
};

/// Segment lengths are in units of the turning radius; negative means reverse.
struct Path {
  std::array<Turn, 5> types{Turn::kNone, Turn::kNone, Turn::kNone, Turn::kNone, Turn::kNone};
  std::array<double, 5> lengths{0, 0, 0, 0, 0};
  double radius = 1.0;

  double normalized_length() const {
    double total = 0.0;
    for (double l : lengths) total += std::abs(l);
    return total;
  }
  double length() const { return normalized_length() * radius; }
  bool valid() const { return std::isfinite(normalized_length()); }
};

namespace detail {

constexpr double kZero = 10.0 * std::numeric_limits<double>::epsilon();
constexpr double kPi = M_PI;

using T = Turn;
constexpr std::array<std::array<Turn, 5>, 18> kWords{{
    {T::kLeft, T::kRight, T::kLeft, T::kNone, T::kNone},
    {T::kRight, T::kLeft, T::kRight, T::kNone, T::kNone},
    {T::kLeft, T::kRight, T::kLeft, T::kRight, T::kNone},
    {T::kRight, T::kLeft, T::kRight, T::kLeft, T::kNone},
    {T::kLeft, T::kRight, T::kStraight, T::kLeft, T::kNone},
    {T::kRight, T::kLeft, T::kStraight, T::kRight, T::kNone},
    {T::kLeft, T::kStraight, T::kRight, T::kLeft, T::kNone},
    {T::kRight, T::kStraight, T::kLeft, T::kRight, T::kNone},
    {T::kLeft, T::kRight, T::kStraight, T::kRight, T::kNone},
    {T::kRight, T::kLeft, T::kStraight, T::kLeft, T::kNone},
    {T::kRight, T::kStraight, T::kRight, T::kLeft, T::kNone},
    {T::kLeft, T::kStraight, T::kLeft, T::kRight, T::kNone},
    {T::kLeft, T::kStraight, T::kRight, T::kNone, T::kNone},
    {T::kRight, T::kStraight, T::kLeft, T::kNone, T::kNone},
    {T::kLeft, T::kStraight, T::kLeft, T::kNone, T::kNone},
    {T::kRight, T::kStraight, T::kRight, T::kNone, T::kNone},
    {T::kLeft, T::kRight, T::kStraight, T::kLeft, T::kRight},
    {T::kRight, T::kLeft, T::kStraight, T::kRight, T::kLeft},
}};

inline double mod2pi(double x) {
  double v = std::fmod(x, 2.0 * kPi);
  if (v < -kPi) {
    v += 2.0 * kPi;
  } else if (v > kPi) {
    v -= 2.0 * kPi;
  }
  return v;
}

inline void polar(double x, double y, double& r, double& theta) {
  r = std::hypot(x, y);
  theta = std::atan2(y, x);
}

inline void tau_omega(double u, double v, double xi, double eta, double phi, double& tau,
                      double& omega) {
  const double delta = mod2pi(u - v);
  const double a = std::sin(u) - std::sin(delta);
  const double b = std::cos(u) - std::cos(delta) - 1.0;
  const double t1 = std::atan2(eta * a - xi * b, xi * a + eta * b);
  const double t2 = 2.0 * (std::cos(delta) - std::cos(v) - std::cos(u)) + 3.0;
  tau = (t2 < 0.0) ? mod2pi(t1 + kPi) : mod2pi(t1);
  omega = mod2pi(tau - u + v - phi);
}

inline bool LpSpLp(double x, double y, double phi, double& t, double& u, double& v) {
  polar(x - std::sin(phi), y - 1.0 + std::cos(phi), u, t);
  if (t >= -kZero) {
    v = mod2pi(phi - t);
    if (v >= -kZero) return true;
  }
  return false;
}

inline bool LpSpRp(double x, double y, double phi, double& t, double& u, double& v) {
  double t1, u1;
  polar(x + std::sin(phi), y - 1.0 - std::cos(phi), u1, t1);
  u1 = u1 * u1;
  if (u1 >= 4.0) {
    u = std::sqrt(u1 - 4.0);
    const double theta = std::atan2(2.0, u);
    t = mod2pi(t1 + theta);
    v = mod2pi(t - phi);
    return t >= -kZero && v >= -kZero;
  }
  return false;
}

inline bool LpRmL(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x - std::sin(phi);
  const double eta = y - 1.0 + std::cos(phi);
  double u1, theta;
  polar(xi, eta, u1, theta);
  if (u1 <= 4.0) {
    u = -2.0 * std::asin(0.25 * u1);
    t = mod2pi(theta + 0.5 * u + kPi);
    v = mod2pi(phi - t + u);
    return t >= -kZero && u <= kZero;
  }
  return false;
}

inline bool LpRupLumRm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  const double rho = 0.25 * (2.0 + std::hypot(xi, eta));
  if (rho <= 1.0) {
    u = std::acos(rho);
    tau_omega(u, -u, xi, eta, phi, t, v);
    return t >= -kZero && v <= kZero;
  }
  return false;
}

inline bool LpRumLumRp(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  const double rho = (20.0 - xi * xi - eta * eta) / 16.0;
  if (rho >= 0.0 && rho <= 1.0) {
    u = -std::acos(rho);
    if (u >= -0.5 * kPi) {
      tau_omega(u, u, xi, eta, phi, t, v);
      return t >= -kZero && v >= -kZero;
    }
  }
  return false;
}

inline bool LpRmSmLm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x - std::sin(phi);
  const double eta = y - 1.0 + std::cos(phi);
  double rho, theta;
  polar(xi, eta, rho, theta);
  if (rho >= 2.0) {
    const double r = std::sqrt(rho * rho - 4.0);
    u = 2.0 - r;
    t = mod2pi(theta + std::atan2(r, -2.0));
    v = mod2pi(phi - 0.5 * kPi - t);
    return t >= -kZero && u <= kZero && v <= kZero;
  }
  return false;
}

inline bool LpRmSmRm(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  double rho, theta;
  polar(-eta, xi, rho, theta);
  if (rho >= 2.0) {
    t = theta;
    u = 2.0 - rho;
    v = mod2pi(t + 0.5 * kPi - phi);
    return t >= -kZero && u <= kZero && v <= kZero;
  }
  return false;
}

inline bool LpRmSLmRp(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  double rho, theta;
  polar(xi, eta, rho, theta);
  if (rho >= 2.0) {
    u = 4.0 - std::sqrt(rho * rho - 4.0);
    if (u <= kZero) {
      t = mod2pi(std::atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta));
      v = mod2pi(t - phi);
      return t >= -kZero && v >= -kZero;
    }
  }
  return false;
}

struct Best {
  Path path;
  double length = std::numeric_limits<double>::infinity();

  void offer(int word, std::initializer_list<double> lengths) {
    double total = 0.0;
    for (double l : lengths) total += std::abs(l);
    if (total < length) {
      length = total;
      path.types = kWords[word];
      path.lengths = {0, 0, 0, 0, 0};
      std::size_t i = 0;
      for (double l : lengths) path.lengths[i++] = l;
    }
  }
};

inline void csc(double x, double y, double phi, Best& best) {
  double t, u, v;
  if (LpSpLp(x, y, phi, t, u, v)) best.offer(14, {t, u, v});
  if (LpSpLp(-x, y, -phi, t, u, v)) best.offer(14, {-t, -u, -v});
  if (LpSpLp(x, -y, -phi, t, u, v)) best.offer(15, {t, u, v});
  if (LpSpLp(-x, -y, phi, t, u, v)) best.offer(15, {-t, -u, -v});
  if (LpSpRp(x, y, phi, t, u, v)) best.offer(12, {t, u, v});
  if (LpSpRp(-x, y, -phi, t, u, v)) best.offer(12, {-t, -u, -v});
  if (LpSpRp(x, -y, -phi, t, u, v)) best.offer(13, {t, u, v});
  if (LpSpRp(-x, -y, phi, t, u, v)) best.offer(13, {-t, -u, -v});
}

inline void ccc(double x, double y, double phi, Best& best) {
  double t, u, v;
  if (LpRmL(x, y, phi, t, u, v)) best.offer(0, {t, u, v});
  if (LpRmL(-x, y, -phi, t, u, v)) best.offer(0, {-t, -u, -v});
  if (LpRmL(x, -y, -phi, t, u, v)) best.offer(1, {t, u, v});
  if (LpRmL(-x, -y, phi, t, u, v)) best.offer(1, {-t, -u, -v});
  const double xb = x * std::cos(phi) + y * std::sin(phi);
  const double yb = x * std::sin(phi) - y * std::cos(phi);
  if (LpRmL(xb, yb, phi, t, u, v)) best.offer(0, {v, u, t});
  if (LpRmL(-xb, yb, -phi, t, u, v)) best.offer(0, {-v, -u, -t});
  if (LpRmL(xb, -yb, -phi, t, u, v)) best.offer(1, {v, u, t});
  if (LpRmL(-xb, -yb, phi, t, u, v)) best.offer(1, {-v, -u, -t});
}

inline void cccc(double x, double y, double phi, Best& best) {
  double t, u, v;
  if (LpRupLumRm(x, y, phi, t, u, v)) best.offer(2, {t, u, -u, v});
  if (LpRupLumRm(-x, y, -phi, t, u, v)) best.offer(2, {-t, -u, u, -v});
  if (LpRupLumRm(x, -y, -phi, t, u, v)) best.offer(3, {t, u, -u, v});
  if (LpRupLumRm(-x, -y, phi, t, u, v)) best.offer(3, {-t, -u, u, -v});
  if (LpRumLumRp(x, y, phi, t, u, v)) best.offer(2, {t, u, u, v});
  if (LpRumLumRp(-x, y, -phi, t, u, v)) best.offer(2, {-t, -u, -u, -v});
  if (LpRumLumRp(x, -y, -phi, t, u, v)) best.offer(3, {t, u, u, v});
  if (LpRumLumRp(-x, -y, phi, t, u, v)) best.offer(3, {-t, -u, -u, -v});
}

inline void ccsc(double x, double y, double phi, Best& best) {
  double t, u, v;
  const double h = 0.5 * kPi;
  if (LpRmSmLm(x, y, phi, t, u, v)) best.offer(4, {t, -h, u, v});
  if (LpRmSmLm(-x, y, -phi, t, u, v)) best.offer(4, {-t, h, -u, -v});
  if (LpRmSmLm(x, -y, -phi, t, u, v)) best.offer(5, {t, -h, u, v});
  if (LpRmSmLm(-x, -y, phi, t, u, v)) best.offer(5, {-t, h, -u, -v});
  if (LpRmSmRm(x, y, phi, t, u, v)) best.offer(8, {t, -h, u, v});
  if (LpRmSmRm(-x, y, -phi, t, u, v)) best.offer(8, {-t, h, -u, -v});
  if (LpRmSmRm(x, -y, -phi, t, u, v)) best.offer(9, {t, -h, u, v});
  if (LpRmSmRm(-x, -y, phi, t, u, v)) best.offer(9, {-t, h, -u, -v});
  const double xb = x * std::cos(phi) + y * std::sin(phi);
  const double yb = x * std::sin(phi) - y * std::cos(phi);
  if (LpRmSmLm(xb, yb, phi, t, u, v)) best.offer(6, {v, u, -h, t});
  if (LpRmSmLm(-xb, yb, -phi, t, u, v)) best.offer(6, {-v, -u, h, -t});
  if (LpRmSmLm(xb, -yb, -phi, t, u, v)) best.offer(7, {v, u, -h, t});
  if (LpRmSmLm(-xb, -yb, phi, t, u, v)) best.offer(7, {-v, -u, h, -t});
  if (LpRmSmRm(xb, yb, phi, t, u, v)) best.offer(10, {v, u, -h, t});
  if (LpRmSmRm(-xb, yb, -phi, t, u, v)) best.offer(10, {-v, -u, h, -t});
  if (LpRmSmRm(xb, -yb, -phi, t, u, v)) best.offer(11, {v, u, -h, t});
  if (LpRmSmRm(-xb, -yb, phi, t, u, v)) best.offer(11, {-v, -u, h, -t});
}

inline void ccscc(double x, double y, double phi, Best& best) {
  double t, u, v;
  const double h = 0.5 * kPi;
  if (LpRmSLmRp(x, y, phi, t, u, v)) best.offer(16, {t, -h, u, -h, v});
  if (LpRmSLmRp(-x, y, -phi, t, u, v)) best.offer(16, {-t, h, -u, h, -v});
  if (LpRmSLmRp(x, -y, -phi, t, u, v)) best.offer(17, {t, -h, u, -h, v});
  if (LpRmSLmRp(-x, -y, phi, t, u, v)) best.offer(17, {-t, h, -u, h, -v});
}

}  // namespace detail

/// Shortest path from `from` to `to` with minimum turning radius `radius`.
inline Path shortest_path(const Pose& from, const Pose& to, double radius) {
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double c = std::cos(from.phi);
  const double s = std::sin(from.phi);
  const double x = (c * dx + s * dy) / radius;
  const double y = (-s * dx + c * dy) / radius;
  const double phi = to.phi - from.phi;
  detail::Best best;
  detail::csc(x, y, phi, best);
  detail::ccc(x, y, phi, best);
  detail::cccc(x, y, phi, best);
  detail::ccsc(x, y, phi, best);
  detail::ccscc(x, y, phi, best);
  best.path.radius = radius;
  if (!std::isfinite(best.length)) {
    best.path.lengths = {std::numeric_limits<double>::infinity(), 0, 0, 0, 0};
  }
  return best.path;
}

inline double distance(const Pose& from, const Pose& to, double radius) {
  return shortest_path(from, to, radius).length();
}

struct Sample {
  Pose pose;
  bool forward = true;
  double curvature = 0.0;  // signed, 1/m, with respect to travelled arc length
};

/// Samples the path every `step` metres (plus segment ends). Heading is
/// continuous from `from.phi`.
inline std::vector<Sample> sample(const Pose& from, const Path& path, double step) {
  std::vector<Sample> out;
  const double r = path.radius;
  Pose cur{0.0, 0.0, 0.0};  // normalized local frame
  auto to_world = [&](const Pose& p) {
    const double c = std::cos(from.phi);
    const double s = std::sin(from.phi);
    return Pose{from.x + r * (c * p.x - s * p.y), from.y + r * (s * p.x + c * p.y),
                from.phi + p.phi};
  };
  auto advance = [](const Pose& p, Turn type, double len) {
    Pose q = p;
    switch (type) {
      case Turn::kLeft:
        q.x += std::sin(p.phi + len) - std::sin(p.phi);
        q.y += -std::cos(p.phi + len) + std::cos(p.phi);
        q.phi = p.phi + len;
        break;
      case Turn::kRight:
        q.x += -std::sin(p.phi - len) + std::sin(p.phi);
        q.y += std::cos(p.phi - len) - std::cos(p.phi);
        q.phi = p.phi - len;
        break;
      case Turn::kStraight:
        q.x += len * std::cos(p.phi);
        q.y += len * std::sin(p.phi);
        break;
      case Turn::kNone:
        break;
    }
    return q;
  };
  bool first = true;
  for (std::size_t i = 0; i < 5; ++i) {
    const Turn type = path.types[i];
    const double len = path.lengths[i];
    if (type == Turn::kNone || std::abs(len) < 1e-12) continue;
    const bool forward = len > 0.0;
    const double kappa =
        type == Turn::kLeft ? 1.0 / r : (type == Turn::kRight ? -1.0 / r : 0.0);
    const double signed_kappa = forward ? kappa : -kappa;
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(len) * r / step)));
    if (first) {
      out.push_back({to_world(cur), forward, signed_kappa});
      first = false;
    } else if (out.back().forward != forward) {
      // Cusp: repeat the pose with the new direction.
      out.push_back({out.back().pose, forward, signed_kappa});
    }
    for (int k = 1; k <= n; ++k) {
      const Pose p = advance(cur, type, len * k / n);
      out.push_back({to_world(p), forward, signed_kappa});
    }
    cur = advance(cur, type, len);
  }
  if (out.empty()) out.push_back({from, true, 0.0});
  return out;
}

}  // namespace tdr_obca::reeds_shepp
